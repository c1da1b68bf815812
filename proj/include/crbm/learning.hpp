#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "crbm/data.hpp"
#include "crbm/inference.hpp"
#include "crbm/model.hpp"
#include "crbm/random.hpp"

namespace crbm {

/// One gradient (or sufficient-statistic) block per CRBM parameter.
struct GradientBlocks {
  MatrixXd dWvh, dWvx, dWhx;
  VectorXd dbv, dbh;

  static GradientBlocks zeros_like(const Crbm& p);

  GradientBlocks& operator+=(const GradientBlocks& o);
  GradientBlocks& operator-=(const GradientBlocks& o);
  GradientBlocks& operator*=(double s);
  bool allFinite() const;
  double max_abs() const;
};

GradientBlocks operator-(GradientBlocks a, const GradientBlocks& b);

/// Blocks for a single configuration: v hᵀ, v xᵀ, h xᵀ, v, h (h may be a mean vector).
GradientBlocks configuration_stats(const VectorXd& v, const VectorXd& h, const VectorXd& x);

/// Blocks from pseudo-marginals: Γ, τv xᵀ, τh xᵀ, τv, τh.
GradientBlocks belief_stats(const Beliefs<double>& b, const VectorXd& x);

struct PositiveStats {
  VectorXd mu;  // σ(Wvhᵀ v + Whx x + bh)
  GradientBlocks blocks;
};

PositiveStats positive_stats(const Crbm& p, const VectorXd& v, const VectorXd& x);

enum class NegativeMethod { kBp, kMeanField, kExact, kCd, kPcd };
enum class CdInit { kData, kRandom };

struct NegativePhase {
  NegativeMethod method = NegativeMethod::kBp;
  BpOptions bp;
  int k = 1;
  CdInit init = CdInit::kRandom;
};

/// Per-instance persistent Gibbs states, keyed by training-instance index.
class PersistentChains {
 public:
  explicit PersistentChains(std::size_t n = 0) : states_(n) {}
  void resize(std::size_t n) { states_.resize(n); }
  std::size_t size() const { return states_.size(); }
  bool has(std::size_t idx) const { return idx < states_.size() && states_[idx].has_value(); }
  const VectorXd& state(std::size_t idx) const { return *states_.at(idx); }
  void set(std::size_t idx, VectorXd v) { states_.at(idx) = std::move(v); }

 private:
  std::vector<std::optional<VectorXd>> states_;
};

struct NegativeResult {
  GradientBlocks blocks;
  std::optional<ConvergenceReport> report;  // set for BP / mean field
  bool freshChain = false;                  // PCD chain created on this call
};

/// Model expectations under the x-conditioned RBM `cond`.
/// `data_v` seeds CD chains when init = kData; `chains`/`index` are required for PCD.
NegativeResult negative_stats(const Rbm& cond, const VectorXd& x, const NegativePhase& phase, Rng& rng,
                              const VectorXd* data_v = nullptr, PersistentChains* chains = nullptr,
                              std::size_t index = 0);

struct GradientResult {
  GradientBlocks blocks;
  std::optional<ConvergenceReport> report;
  bool freshChain = false;
};

/// Ascent direction of log p(v|x): positive minus negative statistics.
GradientResult mle_gradient(const Crbm& p, const StructuredPair& instance, const NegativePhase& phase, Rng& rng,
                            PersistentChains* chains = nullptr, std::size_t index = 0);

/// Folds the Hamming loss against `truth` into the visible biases.
Rbm loss_augment(const Rbm& cond, const VectorXd& truth);

/// Descent direction of the marginal structured hinge loss (mixed-product loss-augmented decode).
GradientResult mssvm_gradient(const Crbm& p, const StructuredPair& instance, const BpOptions& opts);

/// Descent direction of the latent structured hinge loss (max-product loss-augmented decode).
GradientResult lssvm_gradient(const Crbm& p, const StructuredPair& instance, const BpOptions& opts);

enum class Algorithm { kMleBp, kMleMf, kCdK, kPcd, kMssvm, kLssvm };

/// How predictions are decoded at validation/test time.
enum class DecodeMode { kMarginalBp, kMarginalMf, kMixed, kMax };

const char* to_string(Algorithm a);
const char* to_string(DecodeMode m);
const char* to_string(CdInit c);
Algorithm parse_algorithm(const std::string& s);
DecodeMode parse_decode_mode(const std::string& s);
CdInit parse_cd_init(const std::string& s);

bool is_margin_loss(Algorithm a);

struct TrainConfig {
  Algorithm algo = Algorithm::kMleBp;
  int hidden = 256;
  int k = 1;
  double learningRate = 0.01;
  int minibatch = 10;
  int epochs = 50;
  int bpBaseIters = 7;  // sweep budget at epoch e is bpBaseIters + e
  double tolerance = 1e-3;
  std::uint64_t seed = 0;
  int patience = 5;     // epochs without validation improvement before stopping; 0 disables
  CdInit cdInit = CdInit::kRandom;
  double damping = 0.0;
  double initStd = 0.01;
  bool logisticOnly = false;  // train only Wvx and bv (logistic-regression baseline)
  int threads = 1;

  void validate() const;
  int sweeps_at(int epoch) const { return bpBaseIters + epoch; }
};

/// The decoder that matches the inference family used in training.
DecodeMode matched_decode_mode(Algorithm a);

struct DecodeOptions {
  DecodeMode mode = DecodeMode::kMarginalBp;
  BpOptions bp;
};

DecodeOptions matched_decode(const TrainConfig& cfg, int epoch);

struct Predictions {
  std::vector<VectorXd> v;
  double convergedFrac = 0.0;
  double meanSweeps = 0.0;
};

Predictions predict(const Crbm& p, const std::vector<StructuredPair>& pairs, const DecodeOptions& opts,
                    int threads = 1);

Metrics evaluate(const Crbm& p, const std::vector<StructuredPair>& pairs, const DecodeOptions& opts,
                 int threads = 1);

struct EpochRecord {
  int epoch = 0;
  double valAllErr = 0.0;
  double valChangedErr = 0.0;
  double bpConvergedFrac = 0.0;  // NaN when the negative phase runs no iterative inference
  double meanSweeps = 0.0;
  double wallSeconds = 0.0;
  std::size_t freshChains = 0;
};

struct TrainHistory {
  Metrics initial;
  std::vector<EpochRecord> epochs;
};

void write_history_tsv(std::ostream& out, const TrainHistory& h);

struct TrainResult {
  Crbm params;
  TrainHistory history;
  int bestEpoch = 0;  // 0 means the initial parameters were never beaten
};

/// Initial parameters for `cfg`: Gaussian weights, zero biases (logistic-only zeroes hidden blocks).
Crbm initial_params(const TrainConfig& cfg, Eigen::Index num_visible, Eigen::Index num_features);

/// Minibatch SGD with the sweep schedule bpBaseIters + epoch and early stopping on validation All error.
TrainResult sgd_train(const std::vector<StructuredPair>& train, const std::vector<StructuredPair>& val,
                      const TrainConfig& cfg, const Crbm* init = nullptr);

struct GridPoint {
  double learningRate = 0.0;
  int minibatch = 0;
  double bestValAllErr = 0.0;
};

struct GridResult {
  TrainConfig best;
  TrainResult result;
  std::vector<GridPoint> points;
};

inline const std::vector<double> kLearningRateGrid = {0.05, 0.02, 0.01, 0.005};
inline const std::vector<int> kMinibatchGrid = {10, 20, 40, 80, 160};

/// Trains every (learning rate, minibatch) pair and keeps the lowest validation All error.
GridResult grid_search(const std::vector<StructuredPair>& train, const std::vector<StructuredPair>& val,
                       const TrainConfig& base, const std::vector<double>& learning_rates = kLearningRateGrid,
                       const std::vector<int>& minibatches = kMinibatchGrid);

}  // namespace crbm
