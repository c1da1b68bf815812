#pragma once

#include <random>

#include "crbm/bp.hpp"
#include "crbm/scalar_bp.hpp"

namespace crbm {

/// Naive mean field: alternating τh = σ(Wᵀτv + b2), τv = σ(Wτh + b1) from τ = σ(b).
/// The sweep delta is the largest change of either belief vector; Γ = τv τhᵀ.
template <typename Scalar>
std::pair<Beliefs<Scalar>, ConvergenceReport> mean_field(const RbmParams<Scalar>& p, const BpOptions& opts) {
  opts.validate();
  p.validate();
  Beliefs<Scalar> bel = Beliefs<Scalar>::from_biases(p);
  detail::clamp_probabilities(bel.tauV);
  detail::clamp_probabilities(bel.tauH);
  double delta = 0.0;
  int sweep = 0;
  while (sweep < opts.maxIters) {
    ++sweep;
    const Vector<Scalar> old_h = bel.tauH;
    const Vector<Scalar> old_v = bel.tauV;
    bel.tauH = crbm::logistic((p.W.transpose() * bel.tauV + p.b2).array()).matrix();
    bel.tauV = crbm::logistic((p.W * bel.tauH + p.b1).array()).matrix();
    if (opts.damping > 0.0) {
      bel.tauH = Scalar(1 - opts.damping) * bel.tauH + Scalar(opts.damping) * old_h;
      bel.tauV = Scalar(1 - opts.damping) * bel.tauV + Scalar(opts.damping) * old_v;
    }
    detail::clamp_probabilities(bel.tauH);
    detail::clamp_probabilities(bel.tauV);
    if (!bel.tauV.allFinite() || !bel.tauH.allFinite())
      throw NumericalError("mean_field: non-finite value at sweep " + std::to_string(sweep));
    delta = std::max(static_cast<double>((bel.tauH - old_h).cwiseAbs().maxCoeff()),
                     static_cast<double>((bel.tauV - old_v).cwiseAbs().maxCoeff()));
    if (opts.trackConvergence && delta < opts.tolerance) break;
  }
  bel.gamma = bel.tauV * bel.tauH.transpose();
  return {std::move(bel), ConvergenceReport{delta < opts.tolerance, sweep, delta}};
}

/// Draws a Bernoulli vector with the given success probabilities.
template <typename Scalar, typename Rng>
Vector<Scalar> sample_bernoulli(const Vector<Scalar>& prob, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Vector<Scalar> out(prob.size());
  for (Eigen::Index i = 0; i < prob.size(); ++i)
    out(i) = uniform(rng) < static_cast<double>(prob(i)) ? Scalar(1) : Scalar(0);
  return out;
}

template <typename Scalar>
struct GibbsState {
  Vector<Scalar> v;
  Vector<Scalar> h;
};

/// One block Gibbs sweep: h' ~ p(h|v), then v' ~ p(v|h').
template <typename Scalar, typename Rng>
GibbsState<Scalar> gibbs_step(const RbmParams<Scalar>& p, const VectorArg<Scalar>& v, Rng& rng) {
  GibbsState<Scalar> s;
  s.h = sample_bernoulli(conditional_h_given_v(p, v), rng);
  s.v = sample_bernoulli(conditional_v_given_h(p, s.h), rng);
  return s;
}

/// Thresholds visible singleton beliefs at 0.5 (ties to 1).
template <typename Scalar>
Vector<Scalar> decode_marginal_mode(const Beliefs<Scalar>& beliefs) {
  return threshold_half(beliefs.tauV);
}

template <typename Scalar>
struct JointMap {
  Vector<Scalar> v;
  Vector<Scalar> h;
  ConvergenceReport report;
};

/// Joint MAP estimate from max-product BP max-beliefs.
template <typename Scalar>
JointMap<Scalar> decode_joint_map(const RbmParams<Scalar>& p, BpOptions opts) {
  opts.mode = BpMode::kMax;
  const auto r = bp_run(p, opts);
  return {threshold_half(r.beliefs.tauV), threshold_half(r.beliefs.tauH), r.report};
}

template <typename Scalar>
struct MarginalMap {
  Vector<Scalar> v;
  ConvergenceReport report;
};

/// Marginal MAP estimate of v (hidden layer summed out) from mixed-product BP.
template <typename Scalar>
MarginalMap<Scalar> decode_marginal_map(const RbmParams<Scalar>& p, BpOptions opts) {
  opts.mode = BpMode::kMixed;
  const auto r = bp_run(p, opts);
  return {threshold_half(r.beliefs.tauV), r.report};
}

namespace detail {
template <typename Scalar>
Scalar xlogx(Scalar t) {
  return t > Scalar(0) ? t * std::log(t) : Scalar(0);
}
template <typename Scalar>
Scalar binary_entropy(Scalar t) {
  return -xlogx(t) - xlogx(Scalar(1) - t);
}
}  // namespace detail

/// Bethe estimate of log Z from singleton and pairwise beliefs:
///   Σ τv·b1 + Σ τh·b2 + Σ Γ∘W + Σ_edges H(τ_ij) − (|h|−1) Σ H(τv_i) − (|v|−1) Σ H(τh_j)
template <typename Scalar>
Scalar bethe_log_z(const RbmParams<Scalar>& p, const Beliefs<Scalar>& b) {
  require_dims(b.tauV.size() == p.num_visible() && b.tauH.size() == p.num_hidden(), "bethe_log_z: belief sizes");
  require_dims(b.gamma.rows() == p.num_visible() && b.gamma.cols() == p.num_hidden(), "bethe_log_z: gamma shape");
  using detail::binary_entropy;
  using detail::xlogx;
  Scalar out = b.tauV.dot(p.b1) + b.tauH.dot(p.b2) + (b.gamma.array() * p.W.array()).sum();
  for (Eigen::Index i = 0; i < p.num_visible(); ++i)
    for (Eigen::Index j = 0; j < p.num_hidden(); ++j) {
      const Scalar g = b.gamma(i, j);
      const Scalar p10 = std::max(Scalar(0), b.tauV(i) - g);
      const Scalar p01 = std::max(Scalar(0), b.tauH(j) - g);
      const Scalar p00 = std::max(Scalar(0), Scalar(1) - b.tauV(i) - b.tauH(j) + g);
      out -= xlogx(g) + xlogx(p10) + xlogx(p01) + xlogx(p00);
    }
  const Scalar deg_v = Scalar(p.num_hidden() - 1);
  const Scalar deg_h = Scalar(p.num_visible() - 1);
  for (Eigen::Index i = 0; i < p.num_visible(); ++i) out -= deg_v * binary_entropy(b.tauV(i));
  for (Eigen::Index j = 0; j < p.num_hidden(); ++j) out -= deg_h * binary_entropy(b.tauH(j));
  return out;
}

}  // namespace crbm
