#include "crbm/oracle.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <type_traits>

#include "crbm/inference.hpp"
#include "crbm/learning.hpp"
#include "crbm/random.hpp"

namespace crbm {
namespace {

Rbm random_rbm(Eigen::Index nv, Eigen::Index nh, double w_std, double b_std, Rng& rng) {
  std::normal_distribution<double> w(0.0, w_std), b(0.0, b_std);
  Rbm p = Rbm::zeros(nv, nh);
  for (Eigen::Index j = 0; j < nh; ++j)
    for (Eigen::Index i = 0; i < nv; ++i) p.W(i, j) = w(rng);
  for (Eigen::Index i = 0; i < nv; ++i) p.b1(i) = b(rng);
  for (Eigen::Index j = 0; j < nh; ++j) p.b2(j) = b(rng);
  return p;
}

double max_abs_diff(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
  return a.size() ? (a - b).cwiseAbs().maxCoeff() : 0.0;
}

double log_likelihood(const Crbm& p, const VectorXd& v, const VectorXd& x) {
  const Rbm cond = condition(p, x);
  return -free_energy(cond, v) - exact_summary(cond).logZ;
}

}  // namespace

OracleCheck check_matrix_vs_scalar(const OracleOptions& opts) {
  OracleCheck c{"matrix-vs-scalar BP", 1e-10, 0.0, false, ""};
  Rng rng = make_stream(opts.seed, {0xB1u});
  std::uniform_int_distribution<int> size(1, 8);
  for (int m = 0; m < opts.bpModels; ++m) {
    const Rbm p = random_rbm(size(rng), size(rng), 1.0, 1.0, rng);
    for (BpMode mode : {BpMode::kSum, BpMode::kMixed}) {
      BpOptions o;
      o.maxIters = 15;
      o.mode = mode;
      o.trackConvergence = false;
      const auto a = bp_run(p, o);
      const auto b = scalar_bp_reference(p, o);
      for (double d : {max_abs_diff(a.beliefs.tauV, b.beliefs.tauV), max_abs_diff(a.beliefs.tauH, b.beliefs.tauH),
                       max_abs_diff(a.beliefs.gamma, b.beliefs.gamma), max_abs_diff(a.messages.Mvh, b.messages.Mvh),
                       max_abs_diff(a.messages.Mhv, b.messages.Mhv)})
        c.observed = std::max(c.observed, d);
    }
  }
  c.passed = c.observed < c.tolerance;
  c.detail = std::to_string(opts.bpModels) + " models, sum+mixed, 15 sweeps";
  return c;
}

std::vector<OracleCheck> check_tree_exactness(const OracleOptions& opts) {
  OracleCheck marg{"tree BP marginals", 1e-8, 0.0, false, ""};
  OracleCheck logz{"tree Bethe log Z", 1e-6, 0.0, false, ""};
  Rng rng = make_stream(opts.seed, {0x7EEu});
  std::uniform_int_distribution<int> size(1, 8);
  int unconverged = 0;
  for (int m = 0; m < opts.treeModels; ++m) {
    const bool one_hidden = m % 2 == 0;
    const Eigen::Index n = size(rng);
    const Rbm p = one_hidden ? random_rbm(n, 1, 1.0, 1.0, rng) : random_rbm(1, n, 1.0, 1.0, rng);
    BpOptions o;
    o.maxIters = 100;
    o.tolerance = 1e-13;
    const auto r = bp_run(p, o);
    if (!r.report.converged) ++unconverged;
    const auto ex = exact_summary(p);
    for (double d : {max_abs_diff(r.beliefs.tauV, ex.tauV), max_abs_diff(r.beliefs.tauH, ex.tauH),
                     max_abs_diff(r.beliefs.gamma, ex.gamma)})
      marg.observed = std::max(marg.observed, d);
    logz.observed = std::max(logz.observed, std::abs(bethe_log_z(p, r.beliefs) - ex.logZ));
  }
  marg.passed = marg.observed < marg.tolerance && unconverged == 0;
  logz.passed = logz.observed < logz.tolerance && unconverged == 0;
  marg.detail = logz.detail =
      std::to_string(opts.treeModels) + " star models, " + std::to_string(unconverged) + " unconverged";
  return {marg, logz};
}

OracleCheck check_gradients(const OracleOptions& opts) {
  OracleCheck c{"finite-difference gradient", 1e-5, 0.0, false, ""};
  Rng rng = make_stream(opts.seed, {0x6Du});
  std::uniform_int_distribution<int> layer(1, 6), features(0, 4);
  std::normal_distribution<double> normal(0.0, 1.0);
  constexpr double kStep = 1e-5;
  for (int m = 0; m < opts.gradientModels; ++m) {
    const Eigen::Index nv = layer(rng), nh = layer(rng), nx = features(rng);
    Crbm p = Crbm::zeros(nv, nh, nx);
    for (MatrixXd* b : {&p.Wvh, &p.Wvx, &p.Whx})
      for (Eigen::Index k = 0; k < b->size(); ++k) b->data()[k] = normal(rng);
    for (VectorXd* b : {&p.bv, &p.bh})
      for (Eigen::Index k = 0; k < b->size(); ++k) b->data()[k] = normal(rng);
    StructuredPair inst;
    inst.x = VectorXd::NullaryExpr(nx, [&] { return normal(rng); });
    inst.v = sample_bernoulli(VectorXd(VectorXd::Constant(nv, 0.5)), rng);
    inst.changedMask = VectorXd::Zero(nv);

    Crbm analytic_side = p;
    analytic_side.Wvh.array() += opts.perturb;
    NegativePhase exact;
    exact.method = NegativeMethod::kExact;
    const GradientBlocks g = mle_gradient(analytic_side, inst, exact, rng).blocks;

    auto block_error = [&](auto& param, const auto& grad) {
      std::decay_t<decltype(param)> fd = param;
      for (Eigen::Index k = 0; k < param.size(); ++k) {
        const double saved = param.data()[k];
        param.data()[k] = saved + kStep;
        const double up = log_likelihood(p, inst.v, inst.x);
        param.data()[k] = saved - kStep;
        const double down = log_likelihood(p, inst.v, inst.x);
        param.data()[k] = saved;
        fd.data()[k] = (up - down) / (2 * kStep);
      }
      if (fd.size() == 0) return 0.0;
      return (grad - fd).cwiseAbs().maxCoeff() / std::max(fd.cwiseAbs().maxCoeff(), 1e-6);
    };
    for (double e : {block_error(p.Wvh, g.dWvh), block_error(p.Wvx, g.dWvx), block_error(p.Whx, g.dWhx),
                     block_error(p.bv, g.dbv), block_error(p.bh, g.dbh)})
      c.observed = std::max(c.observed, e);
  }
  c.passed = c.observed < c.tolerance;
  c.detail = std::to_string(opts.gradientModels) + " CRBMs, step 1e-5, relative max-norm error per block";
  return c;
}

OracleCheck check_gibbs_moments(const OracleOptions& opts) {
  OracleCheck c{"Gibbs long-run moments", 3.0, 0.0, false, ""};
  Rng rng = make_stream(opts.seed, {0x61Bu});
  const Rbm p = random_rbm(3, 2, 0.5, 0.5, rng);
  const auto ex = exact_summary(p);
  VectorXd v = sample_bernoulli(VectorXd(VectorXd::Constant(3, 0.5)), rng);
  VectorXd sum_v = VectorXd::Zero(3), sum_h = VectorXd::Zero(2);
  MatrixXd sum_vh = MatrixXd::Zero(3, 2);
  for (long s = 0; s < opts.gibbsSweeps; ++s) {
    const auto st = gibbs_step(p, v, rng);
    v = st.v;
    sum_v += st.v;
    sum_h += st.h;
    sum_vh.noalias() += st.v * st.h.transpose();
  }
  const double n = static_cast<double>(opts.gibbsSweeps);
  auto z = [&](double count, double prob) { return std::abs(count / n - prob) / std::sqrt(prob * (1 - prob) / n); };
  for (int i = 0; i < 3; ++i) c.observed = std::max(c.observed, z(sum_v(i), ex.tauV(i)));
  for (int j = 0; j < 2; ++j) c.observed = std::max(c.observed, z(sum_h(j), ex.tauH(j)));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) c.observed = std::max(c.observed, z(sum_vh(i, j), ex.gamma(i, j)));
  c.passed = c.observed <= c.tolerance;
  c.detail = std::to_string(opts.gibbsSweeps) + " sweeps, worst deviation in binomial standard errors";
  return c;
}

std::vector<OracleCheck> run_oracle_battery(const OracleOptions& opts) {
  std::vector<OracleCheck> out;
  out.push_back(check_matrix_vs_scalar(opts));
  for (auto& c : check_tree_exactness(opts)) out.push_back(std::move(c));
  out.push_back(check_gradients(opts));
  out.push_back(check_gibbs_moments(opts));
  return out;
}

void write_oracle_report(std::ostream& out, const std::vector<OracleCheck>& checks) {
  char line[512];
  for (const auto& c : checks) {
    std::snprintf(line, sizeof line, "%-28s %s  observed=%.3e  tolerance=%.1e  (%s)\n", c.name.c_str(),
                  c.passed ? "PASS" : "FAIL", c.observed, c.tolerance, c.detail.c_str());
    out << line;
  }
}

}  // namespace crbm
