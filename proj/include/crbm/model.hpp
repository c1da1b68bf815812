#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "crbm/core.hpp"

namespace crbm {

/// Unconditioned RBM: p(v,h) ∝ exp(vᵀWh + vᵀb1 + hᵀb2).
template <typename Scalar>
struct RbmParams {
  Matrix<Scalar> W;  // |v| x |h|
  Vector<Scalar> b1; // visible bias
  Vector<Scalar> b2; // hidden bias

  RbmParams() = default;
  RbmParams(Matrix<Scalar> w, Vector<Scalar> visible_bias, Vector<Scalar> hidden_bias)
      : W(std::move(w)), b1(std::move(visible_bias)), b2(std::move(hidden_bias)) {
    validate();
  }

  static RbmParams zeros(Eigen::Index num_visible, Eigen::Index num_hidden) {
    return {Matrix<Scalar>::Zero(num_visible, num_hidden), Vector<Scalar>::Zero(num_visible),
            Vector<Scalar>::Zero(num_hidden)};
  }

  Eigen::Index num_visible() const { return W.rows(); }
  Eigen::Index num_hidden() const { return W.cols(); }

  void validate() const {
    require_dims(W.rows() >= 1 && W.cols() >= 1, "RBM needs at least one visible and one hidden unit");
    require_dims(b1.size() == W.rows(), "visible bias length must equal |v|");
    require_dims(b2.size() == W.cols(), "hidden bias length must equal |h|");
    if (!W.allFinite() || !b1.allFinite() || !b2.allFinite())
      throw NumericalError("RBM parameters must be finite");
  }
};

/// Conditional RBM with features x coupling into both layers.
template <typename Scalar>
struct CrbmParams {
  Matrix<Scalar> Wvh;  // |v| x |h|
  Matrix<Scalar> Wvx;  // |v| x |x|
  Matrix<Scalar> Whx;  // |h| x |x|
  Vector<Scalar> bv;
  Vector<Scalar> bh;

  static CrbmParams zeros(Eigen::Index num_visible, Eigen::Index num_hidden, Eigen::Index num_features) {
    return {Matrix<Scalar>::Zero(num_visible, num_hidden), Matrix<Scalar>::Zero(num_visible, num_features),
            Matrix<Scalar>::Zero(num_hidden, num_features), Vector<Scalar>::Zero(num_visible),
            Vector<Scalar>::Zero(num_hidden)};
  }

  /// Gaussian weights (mean 0, std `weight_std`), zero biases.
  template <typename Rng>
  static CrbmParams random(Eigen::Index num_visible, Eigen::Index num_hidden, Eigen::Index num_features,
                           Rng& rng, Scalar weight_std = Scalar(0.01)) {
    std::normal_distribution<double> normal(0.0, static_cast<double>(weight_std));
    auto draw = [&](Eigen::Index rows, Eigen::Index cols) {
      Matrix<Scalar> m(rows, cols);
      // column-major fill order is part of the reproducibility contract
      for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = static_cast<Scalar>(normal(rng));
      return m;
    };
    CrbmParams p = zeros(num_visible, num_hidden, num_features);
    p.Wvh = draw(num_visible, num_hidden);
    p.Wvx = draw(num_visible, num_features);
    p.Whx = draw(num_hidden, num_features);
    return p;
  }

  Eigen::Index num_visible() const { return Wvh.rows(); }
  Eigen::Index num_hidden() const { return Wvh.cols(); }
  Eigen::Index num_features() const { return Wvx.cols(); }

  void validate() const {
    require_dims(Wvh.rows() >= 1 && Wvh.cols() >= 1, "CRBM needs at least one visible and one hidden unit");
    require_dims(Wvx.rows() == Wvh.rows(), "Wvx rows must equal |v|");
    require_dims(Whx.rows() == Wvh.cols(), "Whx rows must equal |h|");
    require_dims(Whx.cols() == Wvx.cols(), "Wvx and Whx must agree on |x|");
    require_dims(bv.size() == Wvh.rows(), "bv length must equal |v|");
    require_dims(bh.size() == Wvh.cols(), "bh length must equal |h|");
    if (!Wvh.allFinite() || !Wvx.allFinite() || !Whx.allFinite() || !bv.allFinite() || !bh.allFinite())
      throw NumericalError("CRBM parameters must be finite");
  }
};

using Rbm = RbmParams<double>;
using Crbm = CrbmParams<double>;

template <typename Scalar>
Scalar energy(const RbmParams<Scalar>& p, const VectorArg<Scalar>& v, const VectorArg<Scalar>& h) {
  require_dims(v.size() == p.num_visible(), "energy: |v| mismatch");
  require_dims(h.size() == p.num_hidden(), "energy: |h| mismatch");
  return -v.dot(p.W * h) - v.dot(p.b1) - h.dot(p.b2);
}

template <typename Scalar>
Scalar energy(const CrbmParams<Scalar>& p, const VectorArg<Scalar>& v, const VectorArg<Scalar>& h,
              const VectorArg<Scalar>& x) {
  require_dims(v.size() == p.num_visible(), "energy: |v| mismatch");
  require_dims(h.size() == p.num_hidden(), "energy: |h| mismatch");
  require_dims(x.size() == p.num_features(), "energy: |x| mismatch");
  return -v.dot(p.Wvh * h) - v.dot(p.Wvx * x) - h.dot(p.Whx * x) - v.dot(p.bv) - h.dot(p.bh);
}

/// Folds the feature couplings into the biases, giving the x-dependent RBM.
template <typename Scalar>
RbmParams<Scalar> condition(const CrbmParams<Scalar>& p, const VectorArg<Scalar>& x) {
  require_dims(x.size() == p.num_features(), "condition: |x| mismatch");
  RbmParams<Scalar> out;
  out.W = p.Wvh;
  out.b1 = p.bv + p.Wvx * x;
  out.b2 = p.bh + p.Whx * x;
  return out;
}

/// F(v) such that Σ_h exp(-E(v,h)) = exp(-F(v)).
template <typename Scalar>
Scalar free_energy(const RbmParams<Scalar>& p, const VectorArg<Scalar>& v) {
  require_dims(v.size() == p.num_visible(), "free_energy: |v| mismatch");
  const Vector<Scalar> u = p.W.transpose() * v + p.b2;
  return -crbm::softplus(u.array()).sum() - v.dot(p.b1);
}

template <typename Scalar>
Vector<Scalar> conditional_h_given_v(const RbmParams<Scalar>& p, const VectorArg<Scalar>& v) {
  require_dims(v.size() == p.num_visible(), "conditional_h_given_v: |v| mismatch");
  return crbm::logistic((p.W.transpose() * v + p.b2).array()).matrix();
}

template <typename Scalar>
Vector<Scalar> conditional_v_given_h(const RbmParams<Scalar>& p, const VectorArg<Scalar>& h) {
  require_dims(h.size() == p.num_hidden(), "conditional_v_given_h: |h| mismatch");
  return crbm::logistic((p.W * h + p.b1).array()).matrix();
}

/// Exact log-partition function and marginals, computed by enumeration.
template <typename Scalar>
struct ExactSummary {
  Scalar logZ{};
  Vector<Scalar> tauV;
  Vector<Scalar> tauH;
  Matrix<Scalar> gamma;  // gamma(i,j) = p(v_i = 1, h_j = 1)
};

namespace detail {

// Enumerates layer A (columns of `w` index layer B) and sums layer B out in closed form.
template <typename Scalar>
void enumerate_layer(const Matrix<Scalar>& w, const Vector<Scalar>& bias_a, const Vector<Scalar>& bias_b,
                     Scalar& log_z, Vector<Scalar>& tau_a, Vector<Scalar>& tau_b, Matrix<Scalar>& pair) {
  const Eigen::Index na = w.rows();
  const std::uint64_t states = std::uint64_t{1} << na;
  Vector<Scalar> a(na);
  auto unpack = [&](std::uint64_t s) {
    for (Eigen::Index i = 0; i < na; ++i) a(i) = Scalar((s >> i) & 1u);
  };
  auto log_weight = [&](Vector<Scalar>& u) {
    u.noalias() = w.transpose() * a;
    u += bias_b;
    return a.dot(bias_a) + crbm::softplus(u.array()).sum();
  };

  Vector<Scalar> u(w.cols());
  Scalar max_lw = -std::numeric_limits<Scalar>::infinity();
  for (std::uint64_t s = 0; s < states; ++s) {
    unpack(s);
    max_lw = std::max(max_lw, log_weight(u));
  }

  Scalar total(0);
  tau_a.setZero(na);
  tau_b.setZero(w.cols());
  pair.setZero(na, w.cols());
  for (std::uint64_t s = 0; s < states; ++s) {
    unpack(s);
    const Scalar weight = std::exp(log_weight(u) - max_lw);
    const Vector<Scalar> mean_b = crbm::logistic(u.array()).matrix();
    total += weight;
    tau_a += weight * a;
    tau_b += weight * mean_b;
    pair.noalias() += (weight * a) * mean_b.transpose();
  }
  log_z = max_lw + std::log(total);
  tau_a /= total;
  tau_b /= total;
  pair /= total;
}

}  // namespace detail

/// Enumerates the smaller layer (2^min(|v|,|h|) states) and integrates the other analytically.
/// Throws ModelTooLarge when min(|v|,|h|) exceeds `limit`.
template <typename Scalar>
ExactSummary<Scalar> exact_summary(const RbmParams<Scalar>& p, int limit = 20) {
  p.validate();
  const Eigen::Index smaller = std::min(p.num_visible(), p.num_hidden());
  if (limit > 40) limit = 40;
  if (smaller > limit)
    throw ModelTooLarge("exact_summary: smaller layer has " + std::to_string(smaller) +
                        " units, limit is " + std::to_string(limit));
  ExactSummary<Scalar> out;
  if (p.num_visible() <= p.num_hidden()) {
    detail::enumerate_layer<Scalar>(p.W, p.b1, p.b2, out.logZ, out.tauV, out.tauH, out.gamma);
  } else {
    Matrix<Scalar> pair_t;
    const Matrix<Scalar> wt = p.W.transpose();
    detail::enumerate_layer<Scalar>(wt, p.b2, p.b1, out.logZ, out.tauH, out.tauV, pair_t);
    out.gamma = pair_t.transpose();
  }
  return out;
}

}  // namespace crbm
