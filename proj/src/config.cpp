#include "crbm/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

namespace crbm {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty())
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  return value;
}

}  // namespace

const std::vector<ConfigKey>& known_config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"algo", "mle-bp", "training algorithm: mle-bp, mle-mf, cd-k, pcd, mssvm, lssvm"},
      {"hidden", "256", "number of hidden units"},
      {"k", "1", "Gibbs steps per CD/PCD update"},
      {"lr", "0.01", "learning rate"},
      {"minibatch", "10", "minibatch size (margin losses update per instance)"},
      {"epochs", "50", "maximum training epochs"},
      {"bp_base_iters", "7", "BP sweep budget at epoch e is bp_base_iters + e"},
      {"tolerance", "0.001", "BP/mean-field convergence tolerance"},
      {"seed", "0", "random seed"},
      {"patience", "5", "early-stopping patience in epochs (0 disables)"},
      {"cd_init", "random", "CD chain initialization: random or data"},
      {"damping", "0", "message damping in [0,1)"},
      {"init_std", "0.01", "standard deviation of initial weights"},
      {"logistic_only", "false", "train only Wvx and bv (logistic-regression baseline)"},
      {"threads", "1", "worker threads"},
      {"grid", "false", "grid search over learning rate and minibatch"},
      {"corruption", "flip", "corruption kind: flip or occlude"},
      {"flip_prob", "0.1", "flip probability"},
      {"patch_h", "8", "occlusion patch height"},
      {"patch_w", "8", "occlusion patch width"},
      {"fill", "0", "occlusion fill value"},
      {"threshold", "127", "binarization threshold (pixel > threshold is 1)"},
      {"val_size", "0", "validation images split off by make-dataset"},
      {"test_size", "0", "test images split off by make-dataset"},
      {"synthetic_count", "1000", "images generated when input = synthetic"},
      {"synthetic_height", "16", "synthetic image height"},
      {"synthetic_width", "16", "synthetic image width"},
      {"synthetic_strokes", "32", "stroke templates of the synthetic generator"},
      {"input", "", "input image file, or 'synthetic'"},
      {"data", "", "dataset directory"},
      {"model", "", "model file"},
      {"output", "", "output path"},
      {"history", "", "training history TSV (default: <output>.history.tsv)"},
      {"pgm", "", "PGM image grid written next to predictions"},
      {"decode", "matched", "decoder: matched, marginal-bp, marginal-mf, mixed, max"},
      {"sweeps", "0", "decode sweep budget (0: use the training schedule)"},
      {"allow_mismatch", "false", "permit a decoder that differs from the training inference"},
      {"predictor", "model", "eval predictor: model, identity, truth, file"},
      {"predictions", "", "raw prediction file for predictor = file"},
      {"method", "", "method label for eval output"},
      {"dataset", "", "dataset label for eval output"},
      {"sizes", "1000x500", "bench-bp sizes, comma separated VxH"},
      {"repeats", "1", "bench-bp repetitions per size"},
      {"weight_std", "0.1", "bench-bp weight standard deviation"},
      {"perturb", "0", "oracle-check weight perturbation (negative control)"},
  };
  return keys;
}

bool is_known_key(const std::string& key) {
  const auto& keys = known_config_keys();
  return std::any_of(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.name == key; });
}

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  for (const auto& k : known_config_keys()) cfg.values_[k.name] = k.defaultValue;
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!is_known_key(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("config key '" + key + "' is not set");
  return it->second;
}

int RunConfig::get_int(const std::string& key) const { return parse_number<int>(key, get(key)); }

double RunConfig::get_double(const std::string& key) const { return parse_number<double>(key, get(key)); }

std::uint64_t RunConfig::get_u64(const std::string& key) const { return parse_number<std::uint64_t>(key, get(key)); }

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

void RunConfig::merge(const RunConfig& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

RunConfig parse_config(std::istream& in, const std::string& source) {
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (!is_known_key(key))
      throw ConfigError(source + ":" + std::to_string(lineno) + ": unknown config key '" + key + "'");
    cfg.set(key, trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in, path);
}

void write_config(std::ostream& out, const RunConfig& cfg) {
  for (const auto& [k, v] : cfg.values()) out << k << " = " << v << '\n';
}

TrainConfig to_train_config(const RunConfig& cfg) {
  TrainConfig t;
  try {
    t.algo = parse_algorithm(cfg.get("algo"));
    t.cdInit = parse_cd_init(cfg.get("cd_init"));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  t.hidden = cfg.get_int("hidden");
  t.k = cfg.get_int("k");
  t.learningRate = cfg.get_double("lr");
  t.minibatch = cfg.get_int("minibatch");
  t.epochs = cfg.get_int("epochs");
  t.bpBaseIters = cfg.get_int("bp_base_iters");
  t.tolerance = cfg.get_double("tolerance");
  t.seed = cfg.get_u64("seed");
  t.patience = cfg.get_int("patience");
  t.damping = cfg.get_double("damping");
  t.initStd = cfg.get_double("init_std");
  t.logisticOnly = cfg.get_bool("logistic_only");
  t.threads = cfg.get_int("threads");
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return t;
}

CorruptionSpec to_corruption_spec(const RunConfig& cfg) {
  CorruptionSpec s;
  const std::string& kind = cfg.get("corruption");
  if (kind == "flip")
    s.kind = CorruptionKind::kFlip;
  else if (kind == "occlude")
    s.kind = CorruptionKind::kOcclude;
  else
    throw ConfigError("unknown corruption kind '" + kind + "'");
  s.flipProb = cfg.get_double("flip_prob");
  s.patchH = cfg.get_int("patch_h");
  s.patchW = cfg.get_int("patch_w");
  s.fillValue = cfg.get_int("fill");
  s.seed = cfg.get_u64("seed");
  return s;
}

SyntheticSpec to_synthetic_spec(const RunConfig& cfg) {
  SyntheticSpec s;
  s.count = cfg.get_int("synthetic_count");
  s.height = cfg.get_int("synthetic_height");
  s.width = cfg.get_int("synthetic_width");
  s.strokes = cfg.get_int("synthetic_strokes");
  s.seed = cfg.get_u64("seed");
  return s;
}

RunConfig from_train_config(const TrainConfig& t) {
  RunConfig cfg;
  auto num = [](double d) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, d);
    return std::string(buf, res.ptr);
  };
  cfg.set("algo", to_string(t.algo));
  cfg.set("hidden", std::to_string(t.hidden));
  cfg.set("k", std::to_string(t.k));
  cfg.set("lr", num(t.learningRate));
  cfg.set("minibatch", std::to_string(t.minibatch));
  cfg.set("epochs", std::to_string(t.epochs));
  cfg.set("bp_base_iters", std::to_string(t.bpBaseIters));
  cfg.set("tolerance", num(t.tolerance));
  cfg.set("seed", std::to_string(t.seed));
  cfg.set("patience", std::to_string(t.patience));
  cfg.set("cd_init", to_string(t.cdInit));
  cfg.set("damping", num(t.damping));
  cfg.set("init_std", num(t.initStd));
  cfg.set("logistic_only", t.logisticOnly ? "true" : "false");
  cfg.set("threads", std::to_string(t.threads));
  return cfg;
}

}  // namespace crbm
