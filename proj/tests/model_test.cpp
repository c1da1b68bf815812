#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "crbm/model.hpp"
#include "crbm/model_io.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace crbm;
using testutil::gaussian;
using testutil::gaussian_vec;
using testutil::random_bits;

TEST(Energy, ZeroParamsGiveZero) {
  const Rbm p = Rbm::zeros(3, 2);
  EXPECT_EQ(energy(p, VectorXd::Ones(3), VectorXd::Ones(2)), 0.0);
  const Crbm c = Crbm::zeros(3, 2, 4);
  EXPECT_EQ(energy(c, VectorXd::Ones(3), VectorXd::Ones(2), VectorXd::Ones(4)), 0.0);
}

TEST(Energy, SingleProductTerm) {
  const Rbm p(MatrixXd::Ones(1, 1), VectorXd::Zero(1), VectorXd::Zero(1));
  EXPECT_EQ(energy(p, VectorXd::Ones(1), VectorXd::Ones(1)), -1.0);
}

TEST(Energy, MatchesElementwiseLoops) {
  Rng rng = make_stream(1);
  const Crbm c = testutil::random_crbm(5, 4, 3, rng);
  for (int t = 0; t < 20; ++t) {
    const VectorXd v = random_bits(5, rng), h = random_bits(4, rng), x = gaussian_vec(3, 1.0, rng);
    double e = 0;
    for (int i = 0; i < 5; ++i) {
      e -= v(i) * c.bv(i);
      for (int j = 0; j < 4; ++j) e -= v(i) * c.Wvh(i, j) * h(j);
      for (int k = 0; k < 3; ++k) e -= v(i) * c.Wvx(i, k) * x(k);
    }
    for (int j = 0; j < 4; ++j) {
      e -= h(j) * c.bh(j);
      for (int k = 0; k < 3; ++k) e -= h(j) * c.Whx(j, k) * x(k);
    }
    EXPECT_NEAR(energy(c, v, h, x), e, 1e-12);
  }
}

TEST(Energy, RejectsDimensionMismatch) {
  const Rbm p = Rbm::zeros(3, 2);
  EXPECT_THROW(energy(p, VectorXd::Ones(2), VectorXd::Ones(2)), DimensionError);
  const Crbm c = Crbm::zeros(3, 2, 1);
  EXPECT_THROW(energy(c, VectorXd::Ones(3), VectorXd::Ones(2), VectorXd::Ones(2)), DimensionError);
}

TEST(Condition, ZeroFeaturesReduceToRbm) {
  Rng rng = make_stream(2);
  const Crbm c = testutil::random_crbm(4, 3, 2, rng);
  const Rbm r = condition(c, VectorXd::Zero(2));
  EXPECT_EQ(r.b1, c.bv);
  EXPECT_EQ(r.b2, c.bh);
  const VectorXd v = random_bits(4, rng), h = random_bits(3, rng);
  EXPECT_NEAR(energy(c, v, h, VectorXd::Zero(2)), energy(r, v, h), 1e-14);
}

TEST(Condition, IdentityFeatureMap) {
  Crbm c = Crbm::zeros(3, 2, 3);
  c.Wvx = MatrixXd::Identity(3, 3);
  const VectorXd b = (VectorXd(3) << 0.5, -1.5, 2.0).finished();
  EXPECT_EQ(condition(c, b).b1, b);
}

TEST(Condition, EnergyAgreesWithCrbmEnergy) {
  Rng rng = make_stream(3);
  for (int t = 0; t < 50; ++t) {
    const Crbm c = testutil::random_crbm(5, 4, 3, rng);
    const VectorXd v = random_bits(5, rng), h = random_bits(4, rng), x = gaussian_vec(3, 1.0, rng);
    EXPECT_NEAR(energy(condition(c, x), v, h), energy(c, v, h, x), 1e-12);
  }
}

TEST(FreeEnergy, ZeroParams) {
  const Rbm p = Rbm::zeros(3, 2);
  EXPECT_NEAR(free_energy(p, VectorXd::Ones(3)), -2.0 * std::log(2.0), 1e-15);
}

TEST(FreeEnergy, SingleUnit) {
  const double w = 1.7;
  const Rbm p(MatrixXd::Constant(1, 1, w), VectorXd::Zero(1), VectorXd::Zero(1));
  EXPECT_NEAR(free_energy(p, VectorXd::Ones(1)), -std::log1p(std::exp(w)), 1e-15);
}

TEST(FreeEnergy, MatchesHiddenEnumeration) {
  Rng rng = make_stream(4);
  for (int t = 0; t < 10; ++t) {
    const Rbm p = testutil::random_rbm(4, 8, rng);
    const VectorXd v = random_bits(4, rng);
    const double direct = oracle::log_marginal_score(p.W, p.b1, p.b2, v);
    EXPECT_NEAR(std::exp(-free_energy(p, v)) / std::exp(direct), 1.0, 1e-12);
  }
}

TEST(FreeEnergy, LargeArgumentsStayFinite) {
  const Rbm p(MatrixXd::Constant(2, 2, 400.0), VectorXd::Zero(2), VectorXd::Constant(2, 300.0));
  const double f = free_energy(p, VectorXd::Ones(2));
  EXPECT_TRUE(std::isfinite(f));
  EXPECT_NEAR(f, -2 * 1100.0, 1e-9);
}

TEST(Conditionals, ZeroParamsAreOneHalf) {
  const Rbm p = Rbm::zeros(3, 2);
  EXPECT_TRUE(conditional_h_given_v(p, VectorXd::Ones(3)).isApprox(VectorXd::Constant(2, 0.5)));
  EXPECT_TRUE(conditional_v_given_h(p, VectorXd::Ones(2)).isApprox(VectorXd::Constant(3, 0.5)));
}

TEST(Conditionals, MatchJointTable) {
  Rng rng = make_stream(5);
  const Rbm p = testutil::random_rbm(3, 3, rng);
  const VectorXd v = random_bits(3, rng);
  // p(h_j = 1 | v) from explicit sums over all h
  VectorXd num = VectorXd::Zero(3);
  double den = 0;
  for (std::uint64_t s = 0; s < 8; ++s) {
    const VectorXd h = oracle::bits(s, 3);
    const double w = std::exp(-energy(p, v, h));
    den += w;
    num += w * h;
  }
  EXPECT_LT((conditional_h_given_v(p, v) - num / den).cwiseAbs().maxCoeff(), 1e-14);

  const VectorXd h = random_bits(3, rng);
  VectorXd numv = VectorXd::Zero(3);
  double denv = 0;
  for (std::uint64_t s = 0; s < 8; ++s) {
    const VectorXd vv = oracle::bits(s, 3);
    const double w = std::exp(-energy(p, vv, h));
    denv += w;
    numv += w * vv;
  }
  EXPECT_LT((conditional_v_given_h(p, h) - numv / denv).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Conditionals, SaturateWithoutOverflow) {
  const Rbm p(MatrixXd::Zero(1, 2), VectorXd::Constant(1, -50.0), (VectorXd(2) << 50.0, -800.0).finished());
  const VectorXd h = conditional_h_given_v(p, VectorXd::Ones(1));
  EXPECT_NEAR(h(0), 1.0, 1e-15);
  EXPECT_GE(h(1), 0.0);
  EXPECT_TRUE(h.allFinite());
  const VectorXd v = conditional_v_given_h(p, VectorXd::Ones(2));
  EXPECT_NEAR(v(0), 0.0, 1e-15);
}

TEST(Conditionals, StrictlyInsideUnitIntervalForModerateParams) {
  Rng rng = make_stream(6);
  for (int t = 0; t < 100; ++t) {
    const Rbm p = testutil::random_rbm(6, 5, rng, 3.0, 3.0);
    const VectorXd h = conditional_h_given_v(p, random_bits(6, rng));
    const VectorXd v = conditional_v_given_h(p, random_bits(5, rng));
    EXPECT_GT(h.minCoeff(), 0.0);
    EXPECT_LT(h.maxCoeff(), 1.0);
    EXPECT_GT(v.minCoeff(), 0.0);
    EXPECT_LT(v.maxCoeff(), 1.0);
  }
}

TEST(ExactSummary, OneByOneZeroParams) {
  const auto s = exact_summary(Rbm::zeros(1, 1));
  EXPECT_NEAR(s.logZ, std::log(4.0), 1e-15);
  EXPECT_NEAR(s.tauV(0), 0.5, 1e-15);
  EXPECT_NEAR(s.tauH(0), 0.5, 1e-15);
  EXPECT_NEAR(s.gamma(0, 0), 0.25, 1e-15);
}

TEST(ExactSummary, FactorizedModel) {
  Rng rng = make_stream(7);
  const Rbm p(MatrixXd::Zero(4, 3), gaussian_vec(4, 2.0, rng), gaussian_vec(3, 2.0, rng));
  const auto s = exact_summary(p);
  double expected = 0;
  for (int i = 0; i < 4; ++i) expected += std::log1p(std::exp(p.b1(i)));
  for (int j = 0; j < 3; ++j) expected += std::log1p(std::exp(p.b2(j)));
  EXPECT_NEAR(s.logZ, expected, 1e-12);
}

TEST(ExactSummary, MatchesJointEnumerationBothOrientations) {
  Rng rng = make_stream(8);
  for (auto [nv, nh] : {std::pair{6, 5}, std::pair{5, 6}, std::pair{3, 7}}) {
    const Rbm p = testutil::random_rbm(nv, nh, rng);
    const auto s = exact_summary(p);
    const auto j = oracle::enumerate_joint(p.W, p.b1, p.b2);
    EXPECT_NEAR(s.logZ, j.logZ, 1e-10);
    EXPECT_LT((s.tauV - j.tauV).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((s.tauH - j.tauH).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((s.gamma - j.gamma).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ExactSummary, FrechetBoundsOnPairwise) {
  Rng rng = make_stream(9);
  for (int t = 0; t < 20; ++t) {
    const Rbm p = testutil::random_rbm(4, 5, rng, 2.0, 2.0);
    const auto s = exact_summary(p);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 5; ++j) {
        EXPECT_LE(s.gamma(i, j), std::min(s.tauV(i), s.tauH(j)) + 1e-15);
        EXPECT_GE(s.gamma(i, j), std::max(0.0, s.tauV(i) + s.tauH(j) - 1) - 1e-15);
      }
  }
}

TEST(ExactSummary, MarginalLikelihoodConsistency) {
  Rng rng = make_stream(10);
  const Rbm p = testutil::random_rbm(5, 4, rng);
  const auto s = exact_summary(p);
  const auto joint = oracle::enumerate_joint(p.W, p.b1, p.b2);
  const VectorXd v = random_bits(5, rng);
  double direct = 0;
  for (std::uint64_t b = 0; b < 16; ++b) direct += std::exp(-energy(p, v, oracle::bits(b, 4)) - joint.logZ);
  EXPECT_NEAR(std::exp(-free_energy(p, v) - s.logZ) / direct, 1.0, 1e-10);
}

TEST(ExactSummary, RefusesLargeModels) {
  EXPECT_THROW(exact_summary(Rbm::zeros(21, 30)), ModelTooLarge);
  EXPECT_THROW(exact_summary(Rbm::zeros(12, 12), 10), ModelTooLarge);
  EXPECT_NO_THROW(exact_summary(Rbm::zeros(200, 2)));
}

TEST(Params, ValidationRejectsBadShapesAndValues) {
  EXPECT_THROW(Rbm(MatrixXd::Zero(2, 2), VectorXd::Zero(3), VectorXd::Zero(2)), DimensionError);
  EXPECT_THROW(Rbm(MatrixXd::Zero(0, 2), VectorXd::Zero(0), VectorXd::Zero(2)), DimensionError);
  MatrixXd w = MatrixXd::Zero(2, 2);
  w(0, 0) = std::nan("");
  EXPECT_THROW(Rbm(w, VectorXd::Zero(2), VectorXd::Zero(2)), NumericalError);
  Crbm c = Crbm::zeros(2, 2, 1);
  c.Whx = MatrixXd::Zero(2, 3);
  EXPECT_THROW(c.validate(), DimensionError);
}

TEST(Params, RandomInitIsSeededGaussianWithZeroBiases) {
  Rng a = make_stream(11), b = make_stream(11);
  const Crbm p = Crbm::random(30, 20, 10, a);
  const Crbm q = Crbm::random(30, 20, 10, b);
  EXPECT_EQ(p.Wvh, q.Wvh);
  EXPECT_TRUE(p.bv.isZero(0));
  EXPECT_TRUE(p.bh.isZero(0));
  const double sd = std::sqrt(p.Wvh.array().square().mean());
  EXPECT_NEAR(sd, 0.01, 0.001);
}

TEST(ModelIo, RoundTripIsBitExact) {
  Rng rng = make_stream(12);
  const Crbm p = testutil::random_crbm(7, 3, 5, rng);
  std::stringstream buf;
  write_model(buf, p);
  EXPECT_EQ(buf.str().size(), 8 + 12 + 8 * (21 + 35 + 15 + 7 + 3));
  const Crbm q = read_model(buf);
  EXPECT_EQ(p.Wvh, q.Wvh);
  EXPECT_EQ(p.Wvx, q.Wvx);
  EXPECT_EQ(p.Whx, q.Whx);
  EXPECT_EQ(p.bv, q.bv);
  EXPECT_EQ(p.bh, q.bh);
}

TEST(ModelIo, HeaderIsLittleEndian) {
  std::stringstream buf;
  write_model(buf, Crbm::zeros(2, 3, 0));
  const std::string s = buf.str();
  EXPECT_EQ(s.substr(0, 8), "CRBMBP01");
  EXPECT_EQ(static_cast<unsigned char>(s[8]), 2);
  EXPECT_EQ(static_cast<unsigned char>(s[12]), 3);
  EXPECT_EQ(static_cast<unsigned char>(s[16]), 0);
}

TEST(ModelIo, RejectsCorruptFiles) {
  std::stringstream good;
  write_model(good, Crbm::zeros(2, 2, 1));
  const std::string bytes = good.str();
  {
    std::stringstream bad(std::string("XXXXXXXX") + bytes.substr(8));
    EXPECT_THROW(read_model(bad), DataError);
  }
  {
    std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(read_model(truncated), DataError);
  }
  {
    std::stringstream trailing(bytes + "x");
    EXPECT_THROW(read_model(trailing), DataError);
  }
}
