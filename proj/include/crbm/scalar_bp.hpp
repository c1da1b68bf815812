#pragma once

#include <array>
#include <vector>

#include "crbm/bp.hpp"

namespace crbm {

/// Per-edge loopy BP with explicit two-state messages and the same sweep schedule as bp_run.
/// Slow (pointer-chasing over |v|·|h| edges) and meant as the equivalence oracle for the
/// matrix kernels on small models.
template <typename Scalar>
class ScalarBp {
 public:
  using State = std::array<Scalar, 2>;  // {value at 0, value at 1}

  ScalarBp(const RbmParams<Scalar>& p, const BpOptions& opts) : p_(p), opts_(opts) {
    opts_.validate();
    p_.validate();
    nv_ = static_cast<std::size_t>(p.num_visible());
    nh_ = static_cast<std::size_t>(p.num_hidden());
    to_v_.assign(nv_ * nh_, State{Scalar(0.5), Scalar(0.5)});
    to_h_.assign(nv_ * nh_, State{Scalar(0.5), Scalar(0.5)});
    tau_v_.resize(nv_);
    tau_h_.resize(nh_);
    for (std::size_t i = 0; i < nv_; ++i) tau_v_[i] = two_state(crbm::logistic(p.b1(i)));
    for (std::size_t j = 0; j < nh_; ++j) tau_h_[j] = two_state(crbm::logistic(p.b2(j)));
  }

  BpResult<Scalar> run() {
    double delta = 0.0;
    int sweep = 0;
    while (sweep < opts_.maxIters) {
      ++sweep;
      delta = this->sweep();
      if (opts_.trackConvergence && delta < opts_.tolerance) break;
    }
    BpResult<Scalar> out;
    out.report = {delta < opts_.tolerance, sweep, delta};
    out.messages = messages();
    out.beliefs.tauV.resize(nv_);
    out.beliefs.tauH.resize(nh_);
    for (std::size_t i = 0; i < nv_; ++i) out.beliefs.tauV(i) = tau_v_[i][1];
    for (std::size_t j = 0; j < nh_; ++j) out.beliefs.tauH(j) = tau_h_[j][1];
    out.beliefs.gamma = pairwise();
    return out;
  }

 private:
  static State two_state(Scalar one) {
    const Scalar lo = Scalar(kMessageClamp);
    one = std::clamp(one, lo, Scalar(1) - lo);
    return {Scalar(1) - one, one};
  }

  State normalized(State m, const State& old) const {
    Scalar one = m[1] / (m[0] + m[1]);
    if (opts_.damping > 0.0) one = Scalar(1 - opts_.damping) * one + Scalar(opts_.damping) * old[1];
    return two_state(one);
  }

  // m_{j->i}(v) ∝ Σ_h exp(v W_ij h) τ(h_j) / m_{i->j}(h)   (max over h in max mode)
  State message_to_visible(std::size_t i, std::size_t j) const {
    const State& in = to_h_[edge(i, j)];
    const Scalar w = p_.W(i, j);
    State out{};
    for (int v = 0; v < 2; ++v) {
      const Scalar h0 = tau_h_[j][0] / in[0];
      const Scalar h1 = std::exp(Scalar(v) * w) * tau_h_[j][1] / in[1];
      out[v] = opts_.mode == BpMode::kMax ? std::max(h0, h1) : h0 + h1;
    }
    return out;
  }

  State message_to_hidden(std::size_t i, std::size_t j) const {
    const State& in = to_v_[edge(i, j)];
    const Scalar w = p_.W(i, j);
    State out{};
    if (opts_.mode == BpMode::kMixed) {
      const int v = tau_v_[i][1] >= Scalar(0.5) ? 1 : 0;  // ties resolve to 1
      for (int h = 0; h < 2; ++h) out[h] = std::exp(Scalar(v * h) * w) * tau_v_[i][v] / in[v];
      return out;
    }
    for (int h = 0; h < 2; ++h) {
      const Scalar v0 = tau_v_[i][0] / in[0];
      const Scalar v1 = std::exp(Scalar(h) * w) * tau_v_[i][1] / in[1];
      out[h] = opts_.mode == BpMode::kMax ? std::max(v0, v1) : v0 + v1;
    }
    return out;
  }

  // τ(x) ∝ exp(x b) Π_k m_k(x), evaluated with log-products.
  static State belief(Scalar bias, const std::vector<const State*>& incoming) {
    Scalar log0 = 0;
    Scalar log1 = bias;
    for (const State* m : incoming) {
      log0 += std::log((*m)[0]);
      log1 += std::log((*m)[1]);
    }
    return two_state(crbm::logistic(log1 - log0));
  }

  double sweep() {
    double delta = 0.0;
    std::vector<const State*> incoming;
    for (std::size_t i = 0; i < nv_; ++i)
      for (std::size_t j = 0; j < nh_; ++j) {
        State& m = to_v_[edge(i, j)];
        const State fresh = normalized(message_to_visible(i, j), m);
        delta = std::max(delta, static_cast<double>(std::abs(fresh[1] - m[1])));
        m = fresh;
      }
    for (std::size_t i = 0; i < nv_; ++i) {
      incoming.clear();
      for (std::size_t j = 0; j < nh_; ++j) incoming.push_back(&to_v_[edge(i, j)]);
      tau_v_[i] = belief(p_.b1(i), incoming);
    }
    for (std::size_t j = 0; j < nh_; ++j)
      for (std::size_t i = 0; i < nv_; ++i) {
        State& m = to_h_[edge(i, j)];
        const State fresh = normalized(message_to_hidden(i, j), m);
        delta = std::max(delta, static_cast<double>(std::abs(fresh[1] - m[1])));
        m = fresh;
      }
    for (std::size_t j = 0; j < nh_; ++j) {
      incoming.clear();
      for (std::size_t i = 0; i < nv_; ++i) incoming.push_back(&to_h_[edge(i, j)]);
      tau_h_[j] = belief(p_.b2(j), incoming);
    }
    return delta;
  }

  Matrix<Scalar> pairwise() const {
    Matrix<Scalar> gamma(nv_, nh_);
    for (std::size_t i = 0; i < nv_; ++i)
      for (std::size_t j = 0; j < nh_; ++j) {
        const State& mv = to_v_[edge(i, j)];
        const State& mh = to_h_[edge(i, j)];
        Scalar table[2][2];
        Scalar total = 0;
        for (int v = 0; v < 2; ++v)
          for (int h = 0; h < 2; ++h) {
            table[v][h] = std::exp(Scalar(v * h) * p_.W(i, j)) * tau_v_[i][v] / mv[v] * tau_h_[j][h] / mh[h];
            total += table[v][h];
          }
        gamma(i, j) = table[1][1] / total;
      }
    return gamma;
  }

  Messages<Scalar> messages() const {
    Messages<Scalar> m{Matrix<Scalar>(nv_, nh_), Matrix<Scalar>(nh_, nv_)};
    for (std::size_t i = 0; i < nv_; ++i)
      for (std::size_t j = 0; j < nh_; ++j) {
        m.Mvh(i, j) = to_v_[edge(i, j)][1];
        m.Mhv(j, i) = to_h_[edge(i, j)][1];
      }
    return m;
  }

  std::size_t edge(std::size_t i, std::size_t j) const { return i * nh_ + j; }

  RbmParams<Scalar> p_;
  BpOptions opts_;
  std::size_t nv_ = 0, nh_ = 0;
  std::vector<State> to_v_;  // m_{j->i}(v_i), edge (i,j)
  std::vector<State> to_h_;  // m_{i->j}(h_j), edge (i,j)
  std::vector<State> tau_v_, tau_h_;
};

template <typename Scalar>
BpResult<Scalar> scalar_bp_reference(const RbmParams<Scalar>& p, const BpOptions& opts) {
  return ScalarBp<Scalar>(p, opts).run();
}

}  // namespace crbm
