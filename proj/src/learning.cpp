#include "crbm/learning.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <thread>

namespace crbm {
namespace {

// Runs fn(k, worker) for k in [0, n) over contiguous chunks; results must not depend on the split.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
  if (workers <= 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k, 0);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t k = w * chunk; k < std::min(n, (w + 1) * chunk); ++k) fn(k, static_cast<int>(w));
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

VectorXd random_binary(Eigen::Index n, Rng& rng) {
  return sample_bernoulli(VectorXd(VectorXd::Constant(n, 0.5)), rng);
}

Beliefs<double> exact_beliefs(const Rbm& cond) {
  const auto s = exact_summary(cond);
  return {s.tauV, s.tauH, s.gamma};
}

NegativeResult negative_impl(const Rbm& cond, const VectorXd& x, const NegativePhase& phase, Rng& rng,
                             const VectorXd* data_v, PersistentChains* chains, std::size_t index,
                             BpWorkspace<double>* ws) {
  NegativeResult out;
  switch (phase.method) {
    case NegativeMethod::kBp: {
      BpOptions o = phase.bp;
      o.mode = BpMode::kSum;
      const auto r = ws ? bp_run(cond, o, *ws) : bp_run(cond, o);
      out.blocks = belief_stats(r.beliefs, x);
      out.report = r.report;
      return out;
    }
    case NegativeMethod::kMeanField: {
      const auto [bel, report] = mean_field(cond, phase.bp);
      out.blocks = belief_stats(bel, x);
      out.report = report;
      return out;
    }
    case NegativeMethod::kExact:
      out.blocks = belief_stats(exact_beliefs(cond), x);
      return out;
    case NegativeMethod::kCd:
    case NegativeMethod::kPcd: {
      if (phase.k < 1) throw std::invalid_argument("negative_stats: k must be >= 1");
      VectorXd v;
      if (phase.method == NegativeMethod::kPcd) {
        if (!chains) throw std::invalid_argument("negative_stats: PCD requires persistent chains");
        if (chains->has(index)) {
          v = chains->state(index);
        } else {
          out.freshChain = true;
        }
      }
      if (v.size() == 0) {
        if (phase.init == CdInit::kData) {
          if (!data_v) throw std::invalid_argument("negative_stats: data-initialized chain needs the instance");
          v = *data_v;
        } else {
          v = random_binary(cond.num_visible(), rng);
        }
      }
      for (int s = 0; s < phase.k; ++s) v = gibbs_step(cond, v, rng).v;
      out.blocks = configuration_stats(v, conditional_h_given_v(cond, v), x);
      if (phase.method == NegativeMethod::kPcd) chains->set(index, v);
      return out;
    }
  }
  throw std::logic_error("negative_stats: unknown method");
}

GradientResult mle_impl(const Crbm& p, const StructuredPair& inst, const NegativePhase& phase, Rng& rng,
                        PersistentChains* chains, std::size_t index, BpWorkspace<double>* ws) {
  const Rbm cond = condition(p, inst.x);
  const PositiveStats pos = positive_stats(p, inst.v, inst.x);
  NegativeResult neg = negative_impl(cond, inst.x, phase, rng, &inst.v, chains, index, ws);
  GradientResult out;
  out.blocks = pos.blocks - neg.blocks;
  out.report = neg.report;
  out.freshChain = neg.freshChain;
  return out;
}

GradientResult margin_impl(const Crbm& p, const StructuredPair& inst, BpOptions opts, BpMode mode,
                           BpWorkspace<double>* ws) {
  require_binary(inst.v, "margin gradient: v");
  const Rbm cond = condition(p, inst.x);
  const Rbm augmented = loss_augment(cond, inst.v);
  opts.mode = mode;
  const auto r = ws ? bp_run(augmented, opts, *ws) : bp_run(augmented, opts);
  const VectorXd v_hat = threshold_half(r.beliefs.tauV);
  GradientResult out;
  out.report = r.report;
  if (mode == BpMode::kMixed) {
    out.blocks = configuration_stats(v_hat, conditional_h_given_v(cond, v_hat), inst.x) -
                 configuration_stats(inst.v, conditional_h_given_v(cond, inst.v), inst.x);
  } else {
    const VectorXd h_hat = threshold_half(r.beliefs.tauH);
    const VectorXd h_plus = threshold_half(conditional_h_given_v(cond, inst.v));
    out.blocks = configuration_stats(v_hat, h_hat, inst.x) - configuration_stats(inst.v, h_plus, inst.x);
  }
  return out;
}

NegativePhase phase_for(const TrainConfig& cfg, int epoch) {
  NegativePhase ph;
  ph.bp.maxIters = cfg.sweeps_at(epoch);
  ph.bp.tolerance = cfg.tolerance;
  ph.bp.damping = cfg.damping;
  ph.k = cfg.k;
  ph.init = cfg.cdInit;
  switch (cfg.algo) {
    case Algorithm::kMleBp: ph.method = NegativeMethod::kBp; break;
    case Algorithm::kMleMf: ph.method = NegativeMethod::kMeanField; break;
    case Algorithm::kCdK: ph.method = NegativeMethod::kCd; break;
    case Algorithm::kPcd: ph.method = NegativeMethod::kPcd; break;
    default: break;
  }
  return ph;
}

void check_dataset(const std::vector<StructuredPair>& pairs, Eigen::Index nv, Eigen::Index nx, const char* name) {
  for (const auto& p : pairs) {
    if (p.v.size() != nv || p.x.size() != nx || p.changedMask.size() != nv)
      throw DataError(std::string(name) + ": instances disagree on shape");
    if (!is_binary(p.v)) throw DataError(std::string(name) + ": targets must be binary");
  }
}

void zero_hidden_blocks(Crbm& p) {
  p.Wvh.setZero();
  p.Whx.setZero();
  p.bh.setZero();
}

void zero_hidden_blocks(GradientBlocks& g) {
  g.dWvh.setZero();
  g.dWhx.setZero();
  g.dbh.setZero();
}

void apply(Crbm& p, const GradientBlocks& g, double step) {
  p.Wvh += step * g.dWvh;
  p.Wvx += step * g.dWvx;
  p.Whx += step * g.dWhx;
  p.bv += step * g.dbv;
  p.bh += step * g.dbh;
}

bool params_finite(const Crbm& p) {
  return p.Wvh.allFinite() && p.Wvx.allFinite() && p.Whx.allFinite() && p.bv.allFinite() && p.bh.allFinite();
}

}  // namespace

GradientBlocks GradientBlocks::zeros_like(const Crbm& p) {
  return {MatrixXd::Zero(p.Wvh.rows(), p.Wvh.cols()), MatrixXd::Zero(p.Wvx.rows(), p.Wvx.cols()),
          MatrixXd::Zero(p.Whx.rows(), p.Whx.cols()), VectorXd::Zero(p.bv.size()), VectorXd::Zero(p.bh.size())};
}

GradientBlocks& GradientBlocks::operator+=(const GradientBlocks& o) {
  dWvh += o.dWvh;
  dWvx += o.dWvx;
  dWhx += o.dWhx;
  dbv += o.dbv;
  dbh += o.dbh;
  return *this;
}

GradientBlocks& GradientBlocks::operator-=(const GradientBlocks& o) {
  dWvh -= o.dWvh;
  dWvx -= o.dWvx;
  dWhx -= o.dWhx;
  dbv -= o.dbv;
  dbh -= o.dbh;
  return *this;
}

GradientBlocks& GradientBlocks::operator*=(double s) {
  dWvh *= s;
  dWvx *= s;
  dWhx *= s;
  dbv *= s;
  dbh *= s;
  return *this;
}

bool GradientBlocks::allFinite() const {
  return dWvh.allFinite() && dWvx.allFinite() && dWhx.allFinite() && dbv.allFinite() && dbh.allFinite();
}

double GradientBlocks::max_abs() const {
  double m = 0.0;
  for (const MatrixXd* b : {&dWvh, &dWvx, &dWhx})
    if (b->size()) m = std::max(m, b->cwiseAbs().maxCoeff());
  for (const VectorXd* b : {&dbv, &dbh})
    if (b->size()) m = std::max(m, b->cwiseAbs().maxCoeff());
  return m;
}

GradientBlocks operator-(GradientBlocks a, const GradientBlocks& b) {
  a -= b;
  return a;
}

GradientBlocks configuration_stats(const VectorXd& v, const VectorXd& h, const VectorXd& x) {
  return {v * h.transpose(), v * x.transpose(), h * x.transpose(), v, h};
}

GradientBlocks belief_stats(const Beliefs<double>& b, const VectorXd& x) {
  return {b.gamma, b.tauV * x.transpose(), b.tauH * x.transpose(), b.tauV, b.tauH};
}

PositiveStats positive_stats(const Crbm& p, const VectorXd& v, const VectorXd& x) {
  require_dims(v.size() == p.num_visible(), "positive_stats: |v| mismatch");
  require_dims(x.size() == p.num_features(), "positive_stats: |x| mismatch");
  PositiveStats out;
  out.mu = crbm::logistic((p.Wvh.transpose() * v + p.Whx * x + p.bh).array()).matrix();
  out.blocks = configuration_stats(v, out.mu, x);
  return out;
}

NegativeResult negative_stats(const Rbm& cond, const VectorXd& x, const NegativePhase& phase, Rng& rng,
                              const VectorXd* data_v, PersistentChains* chains, std::size_t index) {
  return negative_impl(cond, x, phase, rng, data_v, chains, index, nullptr);
}

GradientResult mle_gradient(const Crbm& p, const StructuredPair& instance, const NegativePhase& phase, Rng& rng,
                            PersistentChains* chains, std::size_t index) {
  return mle_impl(p, instance, phase, rng, chains, index, nullptr);
}

Rbm loss_augment(const Rbm& cond, const VectorXd& truth) {
  require_dims(truth.size() == cond.num_visible(), "loss_augment: |v| mismatch");
  require_binary(truth, "loss_augment: truth");
  Rbm out = cond;
  out.b1 += (VectorXd::Ones(truth.size()) - 2.0 * truth);
  return out;
}

GradientResult mssvm_gradient(const Crbm& p, const StructuredPair& instance, const BpOptions& opts) {
  return margin_impl(p, instance, opts, BpMode::kMixed, nullptr);
}

GradientResult lssvm_gradient(const Crbm& p, const StructuredPair& instance, const BpOptions& opts) {
  return margin_impl(p, instance, opts, BpMode::kMax, nullptr);
}

const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kMleBp: return "mle-bp";
    case Algorithm::kMleMf: return "mle-mf";
    case Algorithm::kCdK: return "cd-k";
    case Algorithm::kPcd: return "pcd";
    case Algorithm::kMssvm: return "mssvm";
    case Algorithm::kLssvm: return "lssvm";
  }
  return "?";
}

const char* to_string(DecodeMode m) {
  switch (m) {
    case DecodeMode::kMarginalBp: return "marginal-bp";
    case DecodeMode::kMarginalMf: return "marginal-mf";
    case DecodeMode::kMixed: return "mixed";
    case DecodeMode::kMax: return "max";
  }
  return "?";
}

const char* to_string(CdInit c) { return c == CdInit::kData ? "data" : "random"; }

Algorithm parse_algorithm(const std::string& s) {
  for (auto a : {Algorithm::kMleBp, Algorithm::kMleMf, Algorithm::kCdK, Algorithm::kPcd, Algorithm::kMssvm,
                 Algorithm::kLssvm})
    if (s == to_string(a)) return a;
  throw std::invalid_argument("unknown algorithm: " + s);
}

DecodeMode parse_decode_mode(const std::string& s) {
  for (auto m : {DecodeMode::kMarginalBp, DecodeMode::kMarginalMf, DecodeMode::kMixed, DecodeMode::kMax})
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown decode mode: " + s);
}

CdInit parse_cd_init(const std::string& s) {
  if (s == "data") return CdInit::kData;
  if (s == "random") return CdInit::kRandom;
  throw std::invalid_argument("unknown cd init: " + s);
}

bool is_margin_loss(Algorithm a) { return a == Algorithm::kMssvm || a == Algorithm::kLssvm; }

void TrainConfig::validate() const {
  if (hidden < 1) throw std::invalid_argument("hidden must be >= 1");
  if (!(learningRate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (minibatch < 1) throw std::invalid_argument("minibatch must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (bpBaseIters < 0 || bpBaseIters + 1 < 1) throw std::invalid_argument("bp base iterations must be >= 0");
  if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be > 0");
  if ((algo == Algorithm::kCdK || algo == Algorithm::kPcd) && k < 1) throw std::invalid_argument("k must be >= 1");
  if (patience < 0) throw std::invalid_argument("patience must be >= 0");
  if (!(damping >= 0.0 && damping < 1.0)) throw std::invalid_argument("damping must be in [0,1)");
  if (!(initStd >= 0.0)) throw std::invalid_argument("init std must be >= 0");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

DecodeMode matched_decode_mode(Algorithm a) {
  switch (a) {
    case Algorithm::kMleBp: return DecodeMode::kMarginalBp;
    case Algorithm::kMssvm: return DecodeMode::kMixed;
    case Algorithm::kLssvm: return DecodeMode::kMax;
    case Algorithm::kMleMf:
    case Algorithm::kCdK:
    case Algorithm::kPcd: return DecodeMode::kMarginalMf;
  }
  return DecodeMode::kMarginalBp;
}

DecodeOptions matched_decode(const TrainConfig& cfg, int epoch) {
  DecodeOptions d;
  d.mode = matched_decode_mode(cfg.algo);
  d.bp.maxIters = std::max(1, cfg.sweeps_at(epoch));
  d.bp.tolerance = cfg.tolerance;
  d.bp.damping = cfg.damping;
  return d;
}

Predictions predict(const Crbm& p, const std::vector<StructuredPair>& pairs, const DecodeOptions& opts,
                    int threads) {
  p.validate();
  Predictions out;
  out.v.resize(pairs.size());
  std::vector<ConvergenceReport> reports(pairs.size());
  const std::size_t workers = static_cast<std::size_t>(std::max(threads, 1));
  std::vector<BpWorkspace<double>> ws(workers);
  if (opts.mode != DecodeMode::kMarginalMf) {
    const Rbm shape(p.Wvh, p.bv, p.bh);
    for (auto& w : ws) w.prepare(shape);
  }
  parallel_for(pairs.size(), threads, [&](std::size_t n, int worker) {
    const Rbm cond = condition(p, pairs[n].x);
    BpOptions o = opts.bp;
    switch (opts.mode) {
      case DecodeMode::kMarginalBp:
      case DecodeMode::kMixed:
      case DecodeMode::kMax: {
        o.mode = opts.mode == DecodeMode::kMarginalBp ? BpMode::kSum
                 : opts.mode == DecodeMode::kMixed    ? BpMode::kMixed
                                                      : BpMode::kMax;
        const auto r = bp_run(cond, o, ws[static_cast<std::size_t>(worker)]);
        out.v[n] = threshold_half(r.beliefs.tauV);
        reports[n] = r.report;
        break;
      }
      case DecodeMode::kMarginalMf: {
        const auto [bel, report] = mean_field(cond, o);
        out.v[n] = threshold_half(bel.tauV);
        reports[n] = report;
        break;
      }
    }
  });
  double converged = 0, sweeps = 0;
  for (const auto& r : reports) {
    converged += r.converged ? 1.0 : 0.0;
    sweeps += r.itersUsed;
  }
  if (!pairs.empty()) {
    out.convergedFrac = converged / static_cast<double>(pairs.size());
    out.meanSweeps = sweeps / static_cast<double>(pairs.size());
  }
  return out;
}

Metrics evaluate(const Crbm& p, const std::vector<StructuredPair>& pairs, const DecodeOptions& opts, int threads) {
  return error_metrics(predict(p, pairs, opts, threads).v, pairs);
}

void write_history_tsv(std::ostream& out, const TrainHistory& h) {
  out << "epoch\tval_all_err\tval_changed_err\tbp_converged_frac\tmean_sweeps\twall_s\n";
  char line[256];
  for (const auto& e : h.epochs) {
    std::snprintf(line, sizeof line, "%d\t%.6f\t%.6f\t%.6f\t%.3f\t%.3f\n", e.epoch, e.valAllErr, e.valChangedErr,
                  e.bpConvergedFrac, e.meanSweeps, e.wallSeconds);
    out << line;
  }
}

Crbm initial_params(const TrainConfig& cfg, Eigen::Index num_visible, Eigen::Index num_features) {
  Rng rng = make_stream(cfg.seed, {0x1417u});
  Crbm p = Crbm::random(num_visible, cfg.hidden, num_features, rng, cfg.initStd);
  if (cfg.logisticOnly) zero_hidden_blocks(p);
  return p;
}

TrainResult sgd_train(const std::vector<StructuredPair>& train, const std::vector<StructuredPair>& val,
                      const TrainConfig& cfg, const Crbm* init) {
  cfg.validate();
  if (train.empty()) throw DataError("sgd_train: empty training set");
  const Eigen::Index nv = train.front().v.size();
  const Eigen::Index nx = train.front().x.size();
  check_dataset(train, nv, nx, "training set");
  check_dataset(val, nv, nx, "validation set");

  TrainResult result;
  Crbm p = init ? *init : initial_params(cfg, nv, nx);
  p.validate();
  require_dims(p.num_visible() == nv && p.num_features() == nx, "sgd_train: initial model does not fit the data");
  if (cfg.logisticOnly) zero_hidden_blocks(p);

  const bool has_val = !val.empty();
  double best_err = std::numeric_limits<double>::infinity();
  if (has_val) {
    result.history.initial = evaluate(p, val, matched_decode(cfg, 0), cfg.threads);
    best_err = result.history.initial.allErr;
  }
  Crbm best = p;
  int stale = 0;

  PersistentChains chains(train.size());
  Rng shuffler = make_stream(cfg.seed, {0xA11u});
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const bool margin = is_margin_loss(cfg.algo);
  const std::size_t batch = margin ? 1 : static_cast<std::size_t>(cfg.minibatch);
  const std::size_t workers = static_cast<std::size_t>(cfg.threads);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffler);
    const NegativePhase phase = phase_for(cfg, epoch);
    std::vector<BpWorkspace<double>> ws(workers);
    std::size_t runs = 0, converged = 0, fresh = 0;
    double sweeps = 0;

    for (std::size_t start = 0, b = 0; start < order.size(); start += batch, ++b) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch)));
      std::sort(idx.begin(), idx.end());
      const Rbm shape(p.Wvh, p.bv, p.bh);
      for (auto& w : ws) w.prepare(shape);

      std::vector<GradientResult> grads(idx.size());
      parallel_for(idx.size(), cfg.threads, [&](std::size_t k, int worker) {
        const std::size_t n = idx[k];
        auto* w = &ws[static_cast<std::size_t>(worker)];
        if (margin) {
          grads[k] = margin_impl(p, train[n], phase.bp, cfg.algo == Algorithm::kMssvm ? BpMode::kMixed : BpMode::kMax,
                                 w);
        } else {
          Rng rng = make_stream(cfg.seed, {static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(n)});
          grads[k] = mle_impl(p, train[n], phase, rng, &chains, n, w);
        }
      });

      GradientBlocks sum = GradientBlocks::zeros_like(p);
      for (const auto& g : grads) {
        sum += g.blocks;
        if (g.report) {
          ++runs;
          converged += g.report->converged ? 1 : 0;
          sweeps += g.report->itersUsed;
        }
        fresh += g.freshChain ? 1 : 0;
      }
      if (cfg.logisticOnly) zero_hidden_blocks(sum);
      const double step = (margin ? -cfg.learningRate : cfg.learningRate) / static_cast<double>(idx.size());
      apply(p, sum, step);
      if (!params_finite(p))
        throw NumericalError("sgd_train: non-finite parameter after update at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(b));
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.freshChains = fresh;
    rec.bpConvergedFrac = runs ? static_cast<double>(converged) / static_cast<double>(runs)
                               : std::numeric_limits<double>::quiet_NaN();
    rec.meanSweeps = runs ? sweeps / static_cast<double>(runs) : std::numeric_limits<double>::quiet_NaN();
    if (has_val) {
      const Metrics m = evaluate(p, val, matched_decode(cfg, epoch), cfg.threads);
      rec.valAllErr = m.allErr;
      rec.valChangedErr = m.changedErr;
    } else {
      rec.valAllErr = rec.valChangedErr = std::numeric_limits<double>::quiet_NaN();
    }
    rec.wallSeconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.epochs.push_back(rec);

    if (!has_val) {
      best = p;
      result.bestEpoch = epoch;
    } else if (rec.valAllErr < best_err) {
      best_err = rec.valAllErr;
      best = p;
      result.bestEpoch = epoch;
      stale = 0;
    } else if (cfg.patience > 0 && ++stale >= cfg.patience) {
      break;
    }
  }
  result.params = std::move(best);
  return result;
}

GridResult grid_search(const std::vector<StructuredPair>& train, const std::vector<StructuredPair>& val,
                       const TrainConfig& base, const std::vector<double>& learning_rates,
                       const std::vector<int>& minibatches) {
  if (learning_rates.empty() || minibatches.empty()) throw std::invalid_argument("grid_search: empty grid");
  GridResult out;
  double best = std::numeric_limits<double>::infinity();
  for (double lr : learning_rates)
    for (int mb : minibatches) {
      TrainConfig cfg = base;
      cfg.learningRate = lr;
      cfg.minibatch = mb;
      TrainResult r = sgd_train(train, val, cfg);
      double err = r.history.initial.allErr;
      for (const auto& e : r.history.epochs) err = std::min(err, e.valAllErr);
      out.points.push_back({lr, mb, err});
      if (err < best || out.points.size() == 1) {
        best = err;
        out.best = cfg;
        out.result = std::move(r);
      }
    }
  return out;
}

}  // namespace crbm
