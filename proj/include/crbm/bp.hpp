#pragma once

#include <string>

#include "crbm/model.hpp"

namespace crbm {

enum class BpMode { kSum, kMixed, kMax };

/// Lower/upper clamp applied to every message and singleton belief before logs or ratios.
inline constexpr double kMessageClamp = 1e-12;

struct BpOptions {
  int maxIters = 10;
  double tolerance = 1e-3;
  BpMode mode = BpMode::kSum;
  // When false every one of maxIters sweeps runs; the report is still filled in.
  bool trackConvergence = true;
  // Fraction of the previous message kept at each update. Zero disables damping.
  double damping = 0.0;

  void validate() const {
    if (maxIters < 1) throw std::invalid_argument("BpOptions: maxIters must be >= 1");
    if (!(tolerance > 0.0)) throw std::invalid_argument("BpOptions: tolerance must be > 0");
    if (!(damping >= 0.0 && damping < 1.0)) throw std::invalid_argument("BpOptions: damping must be in [0,1)");
  }
};

struct ConvergenceReport {
  bool converged = false;
  int itersUsed = 0;
  double finalDelta = 0.0;
};

/// Mvh(i,j) = m_{j->i}(v_i = 1), Mhv(j,i) = m_{i->j}(h_j = 1).
template <typename Scalar>
struct Messages {
  Matrix<Scalar> Mvh;  // |v| x |h|
  Matrix<Scalar> Mhv;  // |h| x |v|

  static Messages uniform(Eigen::Index num_visible, Eigen::Index num_hidden) {
    return {Matrix<Scalar>::Constant(num_visible, num_hidden, Scalar(0.5)),
            Matrix<Scalar>::Constant(num_hidden, num_visible, Scalar(0.5))};
  }
};

template <typename Scalar>
struct Beliefs {
  Vector<Scalar> tauV;   // tau(v_i = 1)
  Vector<Scalar> tauH;   // tau(h_j = 1)
  Matrix<Scalar> gamma;  // tau(v_i = 1, h_j = 1)

  /// Beliefs with no incoming information: sigma(b1), sigma(b2).
  static Beliefs from_biases(const RbmParams<Scalar>& p) {
    Beliefs b;
    b.tauV = crbm::logistic(p.b1.array()).matrix();
    b.tauH = crbm::logistic(p.b2.array()).matrix();
    return b;
  }
};

/// Scratch storage for one BP run. Not shared between concurrent calls.
template <typename Scalar>
struct BpWorkspace {
  Matrix<Scalar> expW;   // exp(W), |v| x |h|
  Matrix<Scalar> expWt;  // exp(W)ᵀ
  Matrix<Scalar> lambdaVh1, lambdaVh2;  // |v| x |h|
  Matrix<Scalar> lambdaHv1, lambdaHv2;  // |h| x |v|
  Matrix<Scalar> gamma11, gamma01, gamma10, gamma00;
  Matrix<Scalar> prevVh, prevHv;

  BpWorkspace() = default;
  explicit BpWorkspace(const RbmParams<Scalar>& p) { prepare(p); }

  void prepare(const RbmParams<Scalar>& p) {
    expW = p.W.array().exp().matrix();
    expWt = expW.transpose();
    if (!expW.allFinite()) throw NumericalError("BP: exp(W) overflows; weights too large");
  }
};

namespace detail {

template <typename Derived>
void clamp_probabilities(Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  const Scalar lo = Scalar(kMessageClamp);
  const Scalar hi = Scalar(1) - Scalar(kMessageClamp);
  m.derived() = m.derived().array().max(lo).min(hi).matrix();
}

// One directional message update given the two Λ blocks:
// sum mode  M = σ(log((e^W∘Λ1 + Λ2) / (Λ1 + Λ2)))
// max mode  M = σ(log(max(e^W∘Λ1, Λ2) / max(Λ1, Λ2)))
template <typename Scalar>
void message_update(const Matrix<Scalar>& exp_w, const Matrix<Scalar>& lambda1, const Matrix<Scalar>& lambda2,
                    BpMode mode, double damping, Matrix<Scalar>& out) {
  const auto l1 = lambda1.array();
  const auto l2 = lambda2.array();
  Matrix<Scalar> fresh;
  if (mode == BpMode::kMax) {
    const auto on = (exp_w.array() * l1).max(l2);
    fresh = (on / (on + l1.max(l2))).matrix();
  } else {
    // σ(log r) = r / (1 + r) with r = num / den
    const auto num = exp_w.array() * l1 + l2;
    fresh = (num / (num + l1 + l2)).matrix();
  }
  if (damping > 0.0)
    out = Scalar(1 - damping) * fresh + Scalar(damping) * out;
  else
    out.swap(fresh);
  clamp_probabilities(out);
}

template <typename Scalar>
auto logit(const Matrix<Scalar>& m) {
  return m.array().log() - (Scalar(1) - m.array()).log();
}

}  // namespace detail

/// Hidden-to-visible message update (sum or max rule).
template <typename Scalar>
void update_Mvh(const RbmParams<Scalar>& /*p*/, Messages<Scalar>& msgs, const Beliefs<Scalar>& beliefs,
                BpWorkspace<Scalar>& ws, BpMode mode = BpMode::kSum, double damping = 0.0) {
  const auto tau_h = beliefs.tauH.transpose().array();
  ws.lambdaVh1 = ((Scalar(1) - msgs.Mhv.transpose().array()).rowwise() * tau_h).matrix();
  ws.lambdaVh2 = (msgs.Mhv.transpose().array().rowwise() * (Scalar(1) - tau_h)).matrix();
  detail::message_update(ws.expW, ws.lambdaVh1, ws.lambdaVh2, mode == BpMode::kMax ? BpMode::kMax : BpMode::kSum,
                         damping, msgs.Mvh);
}

/// Visible-to-hidden sum-product update.
template <typename Scalar>
void update_Mhv_sum(const RbmParams<Scalar>& /*p*/, Messages<Scalar>& msgs, const Beliefs<Scalar>& beliefs,
                    BpWorkspace<Scalar>& ws, double damping = 0.0) {
  const auto tau_v = beliefs.tauV.transpose().array();
  ws.lambdaHv1 = ((Scalar(1) - msgs.Mvh.transpose().array()).rowwise() * tau_v).matrix();
  ws.lambdaHv2 = (msgs.Mvh.transpose().array().rowwise() * (Scalar(1) - tau_v)).matrix();
  detail::message_update(ws.expWt, ws.lambdaHv1, ws.lambdaHv2, BpMode::kSum, damping, msgs.Mhv);
}

/// Visible-to-hidden max-product update.
template <typename Scalar>
void update_Mhv_max(const RbmParams<Scalar>& /*p*/, Messages<Scalar>& msgs, const Beliefs<Scalar>& beliefs,
                    BpWorkspace<Scalar>& ws, double damping = 0.0) {
  const auto tau_v = beliefs.tauV.transpose().array();
  ws.lambdaHv1 = ((Scalar(1) - msgs.Mvh.transpose().array()).rowwise() * tau_v).matrix();
  ws.lambdaHv2 = (msgs.Mvh.transpose().array().rowwise() * (Scalar(1) - tau_v)).matrix();
  detail::message_update(ws.expWt, ws.lambdaHv1, ws.lambdaHv2, BpMode::kMax, damping, msgs.Mhv);
}

/// Mixed-product visible-to-hidden update: Mhv = σ(Wᵀ diag(ṽ)), ṽ the thresholded visible beliefs.
template <typename Scalar>
Matrix<Scalar> mixed_Mhv(const RbmParams<Scalar>& p, const Beliefs<Scalar>& beliefs) {
  const Vector<Scalar> decoded = threshold_half(beliefs.tauV);
  Matrix<Scalar> m = crbm::logistic((p.W.transpose().array().rowwise() * decoded.transpose().array())).matrix();
  detail::clamp_probabilities(m);
  return m;
}

template <typename Scalar>
void update_Mhv_mixed(const RbmParams<Scalar>& p, Messages<Scalar>& msgs, const Beliefs<Scalar>& beliefs,
                      double damping = 0.0) {
  Matrix<Scalar> fresh = mixed_Mhv(p, beliefs);
  if (damping > 0.0) {
    msgs.Mhv = Scalar(1 - damping) * fresh + Scalar(damping) * msgs.Mhv;
    detail::clamp_probabilities(msgs.Mhv);
  } else {
    msgs.Mhv.swap(fresh);
  }
}

/// τv = σ(b1 + logit(Mvh)·1)
template <typename Scalar>
void update_tau_v(const RbmParams<Scalar>& p, const Messages<Scalar>& msgs, Beliefs<Scalar>& beliefs) {
  beliefs.tauV = crbm::logistic((p.b1 + detail::logit(msgs.Mvh).matrix().rowwise().sum()).array()).matrix();
  detail::clamp_probabilities(beliefs.tauV);
}

/// τh = σ(b2 + logit(Mhv)·1)
template <typename Scalar>
void update_tau_h(const RbmParams<Scalar>& p, const Messages<Scalar>& msgs, Beliefs<Scalar>& beliefs) {
  beliefs.tauH = crbm::logistic((p.b2 + detail::logit(msgs.Mhv).matrix().rowwise().sum()).array()).matrix();
  detail::clamp_probabilities(beliefs.tauH);
}

template <typename Scalar>
void update_beliefs(const RbmParams<Scalar>& p, const Messages<Scalar>& msgs, Beliefs<Scalar>& beliefs) {
  update_tau_v(p, msgs, beliefs);
  update_tau_h(p, msgs, beliefs);
}

/// Pairwise beliefs Γ = Γ11 / (Γ11 + Γ01 + Γ10 + Γ00), blocks kept in the workspace.
template <typename Scalar>
Matrix<Scalar> pairwise_beliefs(const Messages<Scalar>& msgs, const Vector<Scalar>& tau_v,
                                const Vector<Scalar>& tau_h, BpWorkspace<Scalar>& ws) {
  const auto mvh = msgs.Mvh.array();
  const auto mhv_t = msgs.Mhv.transpose().array();
  const Vector<Scalar> off_v = Vector<Scalar>::Ones(tau_v.size()) - tau_v;
  const Vector<Scalar> off_h = Vector<Scalar>::Ones(tau_h.size()) - tau_h;

  ws.gamma11 = (ws.expW.array() * (tau_v * tau_h.transpose()).array() * (Scalar(1) - mvh) * (Scalar(1) - mhv_t))
                   .matrix();
  ws.gamma01 = ((off_v * tau_h.transpose()).array() * mvh * (Scalar(1) - mhv_t)).matrix();
  ws.gamma10 = ((tau_v * off_h.transpose()).array() * (Scalar(1) - mvh) * mhv_t).matrix();
  ws.gamma00 = ((off_v * off_h.transpose()).array() * mvh * mhv_t).matrix();

  const auto den = ws.gamma11.array() + ws.gamma01.array() + ws.gamma10.array() + ws.gamma00.array();
  if (!(den > Scalar(0)).all() || !den.allFinite())
    throw NumericalError("pairwise_beliefs: degenerate normalizer (message clamp breached)");
  return (ws.gamma11.array() / den).matrix();
}

template <typename Scalar>
Matrix<Scalar> pairwise_beliefs(const RbmParams<Scalar>& p, const Messages<Scalar>& msgs,
                                const Vector<Scalar>& tau_v, const Vector<Scalar>& tau_h) {
  BpWorkspace<Scalar> ws(p);
  return pairwise_beliefs(msgs, tau_v, tau_h, ws);
}

template <typename Scalar>
struct BpResult {
  Beliefs<Scalar> beliefs;
  Messages<Scalar> messages;
  ConvergenceReport report;
};

/// Matrix-form belief propagation on an RBM.
///
/// Messages start at 0.5 and beliefs at σ(b). Each sweep updates, in order, the hidden-to-visible
/// messages, τv, the visible-to-hidden messages (rule chosen by `opts.mode`) and τh. The sweep
/// delta is the largest absolute message change over both matrices; iteration stops once it falls
/// below the tolerance (when convergence tracking is on). Γ is computed after the last sweep.
template <typename Scalar>
BpResult<Scalar> bp_run(const RbmParams<Scalar>& p, const BpOptions& opts, BpWorkspace<Scalar>& ws) {
  opts.validate();
  p.validate();
  BpResult<Scalar> out;
  out.messages = Messages<Scalar>::uniform(p.num_visible(), p.num_hidden());
  out.beliefs = Beliefs<Scalar>::from_biases(p);
  detail::clamp_probabilities(out.beliefs.tauV);
  detail::clamp_probabilities(out.beliefs.tauH);
  auto& msgs = out.messages;
  auto& bel = out.beliefs;

  double delta = 0.0;
  int sweep = 0;
  while (sweep < opts.maxIters) {
    ++sweep;
    ws.prevVh = msgs.Mvh;
    ws.prevHv = msgs.Mhv;

    update_Mvh(p, msgs, bel, ws, opts.mode, opts.damping);
    update_tau_v(p, msgs, bel);
    switch (opts.mode) {
      case BpMode::kSum: update_Mhv_sum(p, msgs, bel, ws, opts.damping); break;
      case BpMode::kMixed: update_Mhv_mixed(p, msgs, bel, opts.damping); break;
      case BpMode::kMax: update_Mhv_max(p, msgs, bel, ws, opts.damping); break;
    }
    update_tau_h(p, msgs, bel);

    if (!msgs.Mvh.allFinite() || !msgs.Mhv.allFinite() || !bel.tauV.allFinite() || !bel.tauH.allFinite())
      throw NumericalError("bp_run: non-finite value at sweep " + std::to_string(sweep));

    delta = std::max(static_cast<double>((msgs.Mvh - ws.prevVh).cwiseAbs().maxCoeff()),
                     static_cast<double>((msgs.Mhv - ws.prevHv).cwiseAbs().maxCoeff()));
    if (opts.trackConvergence && delta < opts.tolerance) break;
  }

  out.report = {delta < opts.tolerance, sweep, delta};
  bel.gamma = pairwise_beliefs(msgs, bel.tauV, bel.tauH, ws);
  return out;
}

template <typename Scalar>
BpResult<Scalar> bp_run(const RbmParams<Scalar>& p, const BpOptions& opts) {
  BpWorkspace<Scalar> ws(p);
  return bp_run(p, opts, ws);
}

inline const char* to_string(BpMode mode) {
  switch (mode) {
    case BpMode::kSum: return "sum";
    case BpMode::kMixed: return "mixed";
    case BpMode::kMax: return "max";
  }
  return "?";
}

inline BpMode parse_bp_mode(const std::string& s) {
  if (s == "sum") return BpMode::kSum;
  if (s == "mixed") return BpMode::kMixed;
  if (s == "max") return BpMode::kMax;
  throw std::invalid_argument("unknown BP mode: " + s);
}

}  // namespace crbm
