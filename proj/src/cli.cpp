#include "crbm/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "crbm/config.hpp"
#include "crbm/data.hpp"
#include "crbm/inference.hpp"
#include "crbm/learning.hpp"
#include "crbm/model_io.hpp"
#include "crbm/oracle.hpp"

namespace crbm {
namespace {

namespace fs = std::filesystem;

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Command {
  std::string name;
  std::string help;
  std::vector<std::string> keys;
};

const std::vector<Command>& commands() {
  static const std::vector<Command> list = {
      {"make-dataset", "binarize and corrupt images into paired train/val/test sets",
       {"input", "output", "corruption", "flip_prob", "patch_h", "patch_w", "fill", "threshold", "seed", "val_size",
        "test_size", "synthetic_count", "synthetic_height", "synthetic_width", "synthetic_strokes", "pgm"}},
      {"train", "train a CRBM on a paired dataset",
       {"data", "output", "history", "algo", "hidden", "k", "lr", "minibatch", "epochs", "bp_base_iters", "tolerance",
        "seed", "patience", "cd_init", "damping", "init_std", "logistic_only", "threads", "grid"}},
      {"predict", "denoise a paired dataset with a trained model",
       {"model", "data", "output", "pgm", "decode", "sweeps", "tolerance", "damping", "allow_mismatch", "threads"}},
      {"eval", "print All/Changed error as a TSV row",
       {"model", "data", "predictor", "predictions", "method", "dataset", "decode", "sweeps", "tolerance", "damping",
        "allow_mismatch", "threads"}},
      {"bench-bp", "time sum-product BP on random RBMs", {"sizes", "sweeps", "repeats", "weight_std", "seed", "output"}},
      {"oracle-check", "run the exact-oracle self-check battery", {"seed", "perturb"}},
  };
  return list;
}

std::string flag_name(const std::string& key) {
  std::string out = key;
  std::replace(out.begin(), out.end(), '_', '-');
  return out;
}

std::string require_key(const RunConfig& cfg, const std::string& key) {
  const std::string& v = cfg.get(key);
  if (v.empty()) throw UsageError("missing required setting --" + flag_name(key));
  return v;
}

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw DataError("no such file: " + path);
}

void require_dir(const std::string& path) {
  if (!fs::is_directory(path)) throw DataError("no such directory: " + path);
}

void require_writable_parent(const std::string& path) {
  const fs::path parent = fs::absolute(fs::path(path)).parent_path();
  if (!fs::is_directory(parent)) throw DataError("output directory does not exist: " + parent.string());
}

std::string fmt(const char* spec, double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::ofstream open_text(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

// make-dataset

int cmd_make_dataset(const RunConfig& cfg, std::ostream& out) {
  const std::string input = require_key(cfg, "input");
  const std::string output = require_key(cfg, "output");
  if (input != "synthetic") require_file(input);
  require_writable_parent(output);
  const CorruptionSpec spec = to_corruption_spec(cfg);
  const int threshold = cfg.get_int("threshold");
  const int val_size = cfg.get_int("val_size");
  const int test_size = cfg.get_int("test_size");
  if (val_size < 0 || test_size < 0) throw UsageError("split sizes must be >= 0");

  ImageSet images = input == "synthetic" ? synthetic_stroke_images(to_synthetic_spec(cfg)) : load_images(input);
  if (!images.is_binary()) images = binarize(images, threshold);
  spec.validate(images.height, images.width);
  const std::size_t n = static_cast<std::size_t>(images.size());
  if (static_cast<std::size_t>(val_size + test_size) >= n)
    throw UsageError("val_size + test_size must leave at least one training image");

  const std::vector<StructuredPair> pairs = corrupt_dataset(images, spec);
  const Split parts = split(n, {n - static_cast<std::size_t>(val_size + test_size), static_cast<std::size_t>(val_size),
                                static_cast<std::size_t>(test_size)},
                            cfg.get_u64("seed"));
  fs::create_directories(output);
  std::ofstream manifest = open_text((fs::path(output) / "manifest.txt").string());
  manifest << "input = " << input << "\nheight = " << images.height << "\nwidth = " << images.width << '\n';
  for (const char* key : {"corruption", "flip_prob", "patch_h", "patch_w", "fill", "threshold", "seed"})
    manifest << key << " = " << cfg.get(key) << '\n';
  const std::pair<const char*, const std::vector<std::size_t>*> named[] = {
      {"train", &parts.train}, {"val", &parts.val}, {"test", &parts.test}};
  for (const auto& [name, idx] : named) {
    if (idx->empty()) continue;
    std::vector<StructuredPair> subset_pairs;
    subset_pairs.reserve(idx->size());
    for (std::size_t i : *idx) subset_pairs.push_back(pairs[i]);
    save_pairs((fs::path(output) / name).string(), subset_pairs, images.height, images.width);
    manifest << name << "_count = " << idx->size() << '\n';
    out << name << '\t' << idx->size() << '\n';
  }
  if (!cfg.get("pgm").empty()) {
    const auto files = to_files(pairs, images.height, images.width);
    write_pgm_grid(cfg.get("pgm"), {files.clean, files.corrupted, files.mask});
  }
  return kExitOk;
}

// train

std::string sidecar_path(const std::string& model) { return model + ".config"; }

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const std::string data = require_key(cfg, "data");
  const std::string output = require_key(cfg, "output");
  const std::string history = cfg.get("history").empty() ? output + ".history.tsv" : cfg.get("history");
  require_dir((fs::path(data) / "train").string());
  require_writable_parent(output);
  require_writable_parent(history);
  TrainConfig tc = to_train_config(cfg);

  const auto train = load_pairs((fs::path(data) / "train").string());
  std::vector<StructuredPair> val;
  if (fs::is_directory(fs::path(data) / "val")) val = load_pairs((fs::path(data) / "val").string());

  TrainResult result;
  if (cfg.get_bool("grid")) {
    GridResult grid = grid_search(train, val, tc);
    tc = grid.best;
    result = std::move(grid.result);
    std::ofstream g = open_text(output + ".grid.tsv");
    g << "lr\tminibatch\tbest_val_all_err\n";
    for (const auto& p : grid.points)
      g << fmt("%g", p.learningRate) << '\t' << p.minibatch << '\t' << fmt("%.6f", p.bestValAllErr) << '\n';
  } else {
    result = sgd_train(train, val, tc);
  }

  save_model(output, result.params);
  {
    std::ofstream h = open_text(history);
    write_history_tsv(h, result.history);
  }
  RunConfig side = from_train_config(tc);
  const DecodeOptions decode = matched_decode(tc, result.bestEpoch);
  side.set("decode", to_string(decode.mode));
  side.set("sweeps", std::to_string(decode.bp.maxIters));
  {
    std::ofstream s = open_text(sidecar_path(output));
    write_config(s, side);
  }
  out << "best_epoch\t" << result.bestEpoch << "\nepochs_run\t" << result.history.epochs.size() << '\n';
  if (!val.empty()) {
    double best = result.history.initial.allErr;
    for (const auto& e : result.history.epochs)
      if (e.epoch == result.bestEpoch) best = e.valAllErr;
    out << "val_all_err\t" << fmt("%.4f", best) << '\n';
  }
  return kExitOk;
}

// predict / eval

DecodeOptions resolve_decode(const RunConfig& cfg, const std::string& model_path) {
  std::optional<RunConfig> side;
  if (fs::is_regular_file(sidecar_path(model_path))) side = load_config(sidecar_path(model_path));
  DecodeOptions d;
  const std::string requested = cfg.get("decode");
  if (requested == "matched") {
    if (!side) throw UsageError("model has no training sidecar " + sidecar_path(model_path) + "; pass --decode");
    d.mode = parse_decode_mode(side->get("decode"));
  } else {
    d.mode = parse_decode_mode(requested);
    if (side && d.mode != parse_decode_mode(side->get("decode")) && !cfg.get_bool("allow_mismatch"))
      throw UsageError("decoder " + requested + " differs from the training inference (" + side->get("decode") +
                       "); pass --allow-mismatch to override");
  }
  const int sweeps = cfg.get_int("sweeps");
  if (sweeps > 0)
    d.bp.maxIters = sweeps;
  else if (side)
    d.bp.maxIters = side->get_int("sweeps");
  d.bp.tolerance = cfg.get_double("tolerance");
  d.bp.damping = cfg.get_double("damping");
  return d;
}

Crbm load_checked_model(const std::string& path, Eigen::Index nv, Eigen::Index nx) {
  Crbm p = load_model(path);
  if (p.num_visible() != nv || p.num_features() != nx)
    throw DataError("model " + path + " has |v|=" + std::to_string(p.num_visible()) + ", |x|=" +
                    std::to_string(p.num_features()) + " but the data has " + std::to_string(nv) + " pixels");
  return p;
}

int cmd_predict(const RunConfig& cfg, std::ostream& out) {
  const std::string model = require_key(cfg, "model");
  const std::string data = require_key(cfg, "data");
  const std::string output = require_key(cfg, "output");
  require_file(model);
  require_dir(data);
  require_writable_parent(output);
  if (!cfg.get("pgm").empty()) require_writable_parent(cfg.get("pgm"));
  const DecodeOptions decode = resolve_decode(cfg, model);

  int h = 0, w = 0;
  const auto pairs = load_pairs(data, &h, &w);
  const Crbm p = load_checked_model(model, h * w, h * w);
  const Predictions pred = predict(p, pairs, decode, cfg.get_int("threads"));
  const ImageSet images = ImageSet::from_vectors(pred.v, h, w);
  write_raw(output, images);
  if (!cfg.get("pgm").empty()) {
    const auto files = to_files(pairs, h, w);
    write_pgm_grid(cfg.get("pgm"), {files.clean, files.corrupted, images});
  }
  out << "instances\t" << pairs.size() << "\ndecode\t" << to_string(decode.mode) << "\nconverged_frac\t"
      << fmt("%.4f", pred.convergedFrac) << "\nmean_sweeps\t" << fmt("%.3f", pred.meanSweeps) << '\n';
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const std::string data = require_key(cfg, "data");
  require_dir(data);
  const std::string predictor = cfg.get("predictor");
  if (predictor == "model") require_file(require_key(cfg, "model"));
  if (predictor == "file") require_file(require_key(cfg, "predictions"));
  if (predictor != "model" && predictor != "file" && predictor != "identity" && predictor != "truth")
    throw UsageError("unknown predictor '" + predictor + "'");

  int h = 0, w = 0;
  const auto pairs = load_pairs(data, &h, &w);
  std::vector<VectorXd> preds;
  std::string method = predictor;
  if (predictor == "identity") {
    for (const auto& pr : pairs) preds.push_back(pr.x);
  } else if (predictor == "truth") {
    for (const auto& pr : pairs) preds.push_back(pr.v);
  } else if (predictor == "file") {
    const ImageSet images = load_images(cfg.get("predictions"));
    if (static_cast<std::size_t>(images.size()) != pairs.size() || images.height != h || images.width != w)
      throw DataError("predictions do not match the dataset shape");
    for (Eigen::Index n = 0; n < images.size(); ++n) preds.push_back(images.image(n));
  } else {
    const std::string model = cfg.get("model");
    const DecodeOptions decode = resolve_decode(cfg, model);
    const Crbm p = load_checked_model(model, h * w, h * w);
    preds = predict(p, pairs, decode, cfg.get_int("threads")).v;
    method = to_string(decode.mode);
    if (fs::is_regular_file(sidecar_path(model))) method = load_config(sidecar_path(model)).get("algo");
  }
  if (!cfg.get("method").empty()) method = cfg.get("method");
  std::string dataset = cfg.get("dataset");
  if (dataset.empty()) dataset = fs::path(data).lexically_normal().filename().string();
  if (dataset.empty()) dataset = fs::path(data).lexically_normal().parent_path().filename().string();

  const Metrics m = error_metrics(preds, pairs);
  out << "method\tdataset\tall_err\tchanged_err\tn\n";
  out << method << '\t' << dataset << '\t' << fmt("%.3f", m.allErr) << '\t' << fmt("%.3f", m.changedErr) << '\t'
      << m.nInstances << '\n';
  return kExitOk;
}

// bench-bp

std::vector<std::pair<int, int>> parse_sizes(const std::string& text) {
  std::vector<std::pair<int, int>> sizes;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    int v = 0, h = 0;
    char sep = 0, extra = 0;
    if (std::sscanf(item.c_str(), "%d%c%d%c", &v, &sep, &h, &extra) != 3 || sep != 'x' || v < 1 || h < 1)
      throw UsageError("bad size '" + item + "', expected VxH");
    sizes.emplace_back(v, h);
  }
  if (sizes.empty()) throw UsageError("no sizes given");
  return sizes;
}

int cmd_bench_bp(const RunConfig& cfg, std::ostream& out) {
  const auto sizes = parse_sizes(cfg.get("sizes"));
  const int sweeps = cfg.get_int("sweeps") > 0 ? cfg.get_int("sweeps") : 10;
  const int repeats = cfg.get_int("repeats");
  const double weight_std = cfg.get_double("weight_std");
  if (repeats < 1) throw UsageError("repeats must be >= 1");
  if (!(weight_std >= 0)) throw UsageError("weight_std must be >= 0");
  std::ofstream file;
  if (!cfg.get("output").empty()) {
    require_writable_parent(cfg.get("output"));
    file = open_text(cfg.get("output"));
  }
  std::ostream& tsv = cfg.get("output").empty() ? out : file;
  tsv << "v\th\tsweeps\twall_ms\tconverged\tfinal_delta\n";
  Rng rng = make_stream(cfg.get_u64("seed"), {0xBE7u});
  for (const auto& [nv, nh] : sizes) {
    std::normal_distribution<double> normal(0.0, weight_std);
    Rbm p = Rbm::zeros(nv, nh);
    for (Eigen::Index k = 0; k < p.W.size(); ++k) p.W.data()[k] = normal(rng);
    BpOptions o;
    o.maxIters = sweeps;
    o.trackConvergence = false;
    BpWorkspace<double> ws;
    for (int r = 0; r < repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      ws.prepare(p);
      const auto res = bp_run(p, o, ws);
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      tsv << nv << '\t' << nh << '\t' << res.report.itersUsed << '\t' << fmt("%.3f", ms) << '\t'
          << (res.report.converged ? 1 : 0) << '\t' << fmt("%.3e", res.report.finalDelta) << '\n';
    }
  }
  return kExitOk;
}

// oracle-check

int cmd_oracle_check(const RunConfig& cfg, std::ostream& out) {
  OracleOptions o;
  o.seed = cfg.get_u64("seed");
  o.perturb = cfg.get_double("perturb");
  const auto checks = run_oracle_battery(o);
  write_oracle_report(out, checks);
  const bool ok = std::all_of(checks.begin(), checks.end(), [](const OracleCheck& c) { return c.passed; });
  out << (ok ? "all checks passed" : "oracle check FAILED") << '\n';
  return ok ? kExitOk : kExitNumerical;
}

int dispatch(const std::string& name, const RunConfig& cfg, std::ostream& out) {
  if (name == "make-dataset") return cmd_make_dataset(cfg, out);
  if (name == "train") return cmd_train(cfg, out);
  if (name == "predict") return cmd_predict(cfg, out);
  if (name == "eval") return cmd_eval(cfg, out);
  if (name == "bench-bp") return cmd_bench_bp(cfg, out);
  if (name == "oracle-check") return cmd_oracle_check(cfg, out);
  throw UsageError("unknown command " + name);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Belief propagation and learning for (conditional) restricted Boltzmann machines", "crbm"};
  app.require_subcommand(1);
  std::map<std::string, std::map<std::string, std::string>> flags;
  std::map<std::string, std::string> config_files;
  std::map<std::string, std::map<std::string, CLI::Option*>> options;
  for (const auto& c : commands()) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_files[c.name], "key = value settings file");
    for (const auto& key : c.keys) {
      std::string help;
      for (const auto& k : known_config_keys())
        if (k.name == key) help = k.help + (k.defaultValue.empty() ? "" : " (default " + k.defaultValue + ")");
      std::string names = "--" + flag_name(key);
      if (key.find('_') != std::string::npos) names += ",--" + key;
      options[c.name][key] = sub->add_option(names, flags[c.name][key], help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? kExitOk : kExitUsage;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  try {
    RunConfig cfg = RunConfig::defaults();
    if (!config_files[name].empty()) cfg.merge(load_config(config_files[name]));
    for (const auto& [key, opt] : options[name])
      if (opt->count() > 0) cfg.set(key, flags[name][key]);
    return dispatch(name, cfg, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const DimensionError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ModelTooLarge& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace crbm
