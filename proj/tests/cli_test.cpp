#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "crbm/cli.hpp"
#include "crbm/config.hpp"
#include "crbm/data.hpp"
#include "crbm/learning.hpp"

using namespace crbm;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "crbm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("crbm_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

/// Small synthetic dataset shared by the train/predict/eval tests.
fs::path small_dataset(const std::string& name, const std::string& flip = "0.1") {
  const auto dir = temp_dir(name);
  const auto r = run({"make-dataset", "--input", "synthetic", "--output", (dir / "d").string(), "--synthetic-count",
                      "60", "--synthetic-height", "6", "--synthetic-width", "6", "--synthetic-strokes", "6",
                      "--val-size", "10", "--test-size", "10", "--flip-prob", flip, "--seed", "3"});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  return dir;
}

}  // namespace

TEST(Config, ParsesKeyValueLinesWithComments) {
  std::istringstream in("# comment\nalgo = cd-k\n\n  lr=0.02  # trailing\nhidden = 32\n");
  const auto cfg = parse_config(in, "test");
  EXPECT_EQ(cfg.get("algo"), "cd-k");
  EXPECT_DOUBLE_EQ(cfg.get_double("lr"), 0.02);
  EXPECT_EQ(cfg.get_int("hidden"), 32);
  EXPECT_FALSE(cfg.has("epochs"));
}

TEST(Config, RejectsUnknownKeysWithLineNumber) {
  std::istringstream in("algo = cd-k\nlearning_rate = 0.1\n");
  try {
    parse_config(in, "f.conf");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
  RunConfig c;
  EXPECT_THROW(c.set("nope", "1"), ConfigError);
}

TEST(Config, TypedGettersRejectGarbage) {
  RunConfig c = RunConfig::defaults();
  c.set("hidden", "12x");
  EXPECT_THROW(c.get_int("hidden"), ConfigError);
  c.set("lr", "abc");
  EXPECT_THROW(to_train_config(c), ConfigError);
}

TEST(Config, TrainConfigRoundTrip) {
  TrainConfig t;
  t.algo = Algorithm::kPcd;
  t.learningRate = 0.05;
  t.hidden = 17;
  t.cdInit = CdInit::kData;
  const auto back = to_train_config(from_train_config(t));
  EXPECT_EQ(back.algo, t.algo);
  EXPECT_EQ(back.learningRate, t.learningRate);
  EXPECT_EQ(back.hidden, 17);
  EXPECT_EQ(back.cdInit, CdInit::kData);
  EXPECT_EQ(from_train_config(t).get("lr"), "0.05");
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"train", "--no-such-flag", "1"}).code, kExitUsage);
  EXPECT_EQ(run({"train", "--data", "/nonexistent/dir", "--output", "/tmp/x.bin"}).code, kExitData);
  EXPECT_EQ(run({"train"}).code, kExitUsage);
  EXPECT_EQ(run({"bench-bp", "--sizes", "3by4"}).code, kExitUsage);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST(Cli, ConfigFileAndFlagPrecedence) {
  const auto dir = small_dataset("precedence");
  std::ofstream(dir / "run.conf") << "epochs = 1\nhidden = 3\nlr = 0.02\n";
  const auto model = (dir / "m.bin").string();
  const auto r = run({"train", "--config", (dir / "run.conf").string(), "--data", (dir / "d").string(), "--output",
                      model, "--lr", "0.01"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto side = load_config(model + ".config");
  EXPECT_EQ(side.get("epochs"), "1");
  EXPECT_EQ(side.get("hidden"), "3");
  EXPECT_EQ(side.get("lr"), "0.01");
  EXPECT_EQ(side.get("algo"), "mle-bp");
  std::ofstream(dir / "bad.conf") << "epoch = 1\n";
  EXPECT_EQ(run({"train", "--config", (dir / "bad.conf").string()}).code, kExitUsage);
}

TEST(MakeDataset, DeterministicForSeed) {
  const auto a = small_dataset("det_a");
  const auto b = small_dataset("det_b");
  for (const char* part : {"train", "val", "test"})
    for (const char* file : {"clean.bin", "corrupted.bin", "mask.bin"})
      EXPECT_EQ(slurp(a / "d" / part / file), slurp(b / "d" / part / file)) << part << "/" << file;
  EXPECT_NE(slurp(a / "d" / "manifest.txt").find("train_count = 40"), std::string::npos);
}

TEST(MakeDataset, ZeroFlipLeavesInputsClean) {
  const auto dir = small_dataset("flip0", "0");
  for (const auto& p : load_pairs((dir / "d" / "train").string())) {
    EXPECT_EQ(p.x, p.v);
    EXPECT_EQ(p.changedMask.sum(), 0.0);
  }
}

TEST(MakeDataset, FullImageOcclusion) {
  const auto dir = temp_dir("occlude");
  const auto r = run({"make-dataset", "--input", "synthetic", "--output", (dir / "d").string(), "--synthetic-count",
                      "12", "--synthetic-height", "5", "--synthetic-width", "5", "--corruption", "occlude",
                      "--patch-h", "5", "--patch-w", "5", "--fill", "1", "--val-size", "0", "--test-size", "0"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const auto& p : load_pairs((dir / "d" / "train").string())) {
    EXPECT_EQ(p.x, VectorXd::Ones(25));
    EXPECT_EQ(p.changedMask, (VectorXd::Ones(25) - p.v).eval());
  }
  EXPECT_EQ(run({"make-dataset", "--input", "synthetic", "--output", (dir / "e").string(), "--synthetic-height", "5",
                 "--synthetic-width", "5", "--corruption", "occlude", "--patch-h", "6"})
                .code,
            kExitUsage);
}

TEST(MakeDataset, BinarizesIdxInput) {
  const auto dir = temp_dir("idx_input");
  ImageSet gray;
  gray.height = 2;
  gray.width = 2;
  gray.pixels.resize(4, 4);
  gray.pixels << 0, 127, 128, 255, 255, 255, 0, 0, 10, 200, 10, 200, 0, 0, 0, 0;
  write_idx((dir / "in.idx").string(), gray);
  const auto r = run({"make-dataset", "--input", (dir / "in.idx").string(), "--output", (dir / "d").string(),
                      "--flip-prob", "0", "--val-size", "0", "--test-size", "0"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto pairs = load_pairs((dir / "d" / "train").string());
  ASSERT_EQ(pairs.size(), 4u);
  double ones = 0;
  for (const auto& p : pairs) ones += p.v.sum();
  EXPECT_EQ(ones, 2 + 2 + 2 + 0);
}

TEST(Train, ZeroEpochsWritesInitialModel) {
  const auto dir = small_dataset("epochs0");
  const auto model = (dir / "m.bin").string();
  const auto r = run({"train", "--data", (dir / "d").string(), "--output", model, "--epochs", "0", "--hidden", "4"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(fs::is_regular_file(model));
  EXPECT_NE(r.out.find("best_epoch\t0"), std::string::npos);
  const auto hist = lines(slurp(model + ".history.tsv"));
  ASSERT_EQ(hist.size(), 1u);
  EXPECT_EQ(hist[0], "epoch\tval_all_err\tval_changed_err\tbp_converged_frac\tmean_sweeps\twall_s");
}

TEST(Train, HistoryHasOneRowPerEpoch) {
  const auto dir = small_dataset("history");
  const auto model = (dir / "m.bin").string();
  const auto r = run({"train", "--data", (dir / "d").string(), "--output", model, "--epochs", "3", "--hidden", "4",
                      "--patience", "0", "--lr", "0.05"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto hist = lines(slurp(model + ".history.tsv"));
  ASSERT_EQ(hist.size(), 4u);
  for (std::size_t i = 1; i < hist.size(); ++i) {
    std::istringstream row(hist[i]);
    int epoch = 0;
    double all = 0, changed = 0, frac = -1;
    row >> epoch >> all >> changed >> frac;
    EXPECT_EQ(epoch, static_cast<int>(i));
    EXPECT_GE(frac, 0.0);
    EXPECT_LE(frac, 1.0);
  }
}

TEST(Eval, TruthAndIdentityPredictors) {
  const auto dir = small_dataset("eval");
  const auto data = (dir / "d" / "test").string();
  const auto truth = run({"eval", "--data", data, "--predictor", "truth"});
  ASSERT_EQ(truth.code, kExitOk) << truth.err;
  const auto t = lines(truth.out);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0], "method\tdataset\tall_err\tchanged_err\tn");
  EXPECT_EQ(t[1], "truth\ttest\t0.000\t0.000\t10");
  const auto ident = lines(run({"eval", "--data", data, "--predictor", "identity"}).out);
  ASSERT_EQ(ident.size(), 2u);
  EXPECT_NE(ident[1].find("\t100.000\t10"), std::string::npos);
}

TEST(Eval, ModelPredictorUsesSidecarAlgorithmAndDecoder) {
  const auto dir = small_dataset("eval_model");
  const auto model = (dir / "m.bin").string();
  ASSERT_EQ(run({"train", "--data", (dir / "d").string(), "--output", model, "--epochs", "2", "--hidden", "4",
                 "--algo", "mle-bp", "--logistic-only", "true"})
                .code,
            kExitOk);
  const auto r = run({"eval", "--data", (dir / "d" / "test").string(), "--model", model, "--method", "LR"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(lines(r.out)[1].rfind("LR\ttest\t", 0), 0u);
  EXPECT_EQ(run({"eval", "--data", (dir / "d" / "test").string(), "--model", model, "--decode", "max"}).code,
            kExitUsage);
  EXPECT_EQ(run({"eval", "--data", (dir / "d" / "test").string(), "--model", model, "--decode", "max",
                 "--allow-mismatch", "true"})
                .code,
            kExitOk);
}

TEST(Predict, WritesPredictionsThatEvalAccepts) {
  const auto dir = small_dataset("predict");
  const auto model = (dir / "m.bin").string();
  ASSERT_EQ(run({"train", "--data", (dir / "d").string(), "--output", model, "--epochs", "1", "--hidden", "4"}).code,
            kExitOk);
  const auto pred = (dir / "pred.bin").string();
  const auto r = run({"predict", "--data", (dir / "d" / "test").string(), "--model", model, "--output", pred});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto direct = lines(run({"eval", "--data", (dir / "d" / "test").string(), "--model", model}).out);
  const auto from_file = lines(
      run({"eval", "--data", (dir / "d" / "test").string(), "--predictor", "file", "--predictions", pred}).out);
  ASSERT_EQ(direct.size(), 2u);
  ASSERT_EQ(from_file.size(), 2u);
  EXPECT_EQ(direct[1].substr(direct[1].find('\t')), from_file[1].substr(from_file[1].find('\t')));
}

TEST(BenchBp, TinyModelIsFast) {
  const auto r = run({"bench-bp", "--sizes", "1x1,4x3", "--sweeps", "10"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto l = lines(r.out);
  ASSERT_EQ(l.size(), 3u);
  EXPECT_EQ(l[0], "v\th\tsweeps\twall_ms\tconverged\tfinal_delta");
  std::istringstream row(l[1]);
  int v = 0, h = 0, sweeps = 0;
  double ms = 1e9;
  row >> v >> h >> sweeps >> ms;
  EXPECT_EQ(v, 1);
  EXPECT_EQ(h, 1);
  EXPECT_EQ(sweeps, 10);
  EXPECT_LT(ms, 1.0);
}

TEST(OracleCheck, PassesAndDetectsPerturbation) {
  const auto ok = run({"oracle-check", "--seed", "5"});
  EXPECT_EQ(ok.code, kExitOk) << ok.out << ok.err;
  EXPECT_NE(ok.out.find("all checks passed"), std::string::npos);
  const auto bad = run({"oracle-check", "--seed", "5", "--perturb", "0.1"});
  EXPECT_EQ(bad.code, kExitNumerical);
  EXPECT_NE(bad.out.find("FAILED"), std::string::npos);
}

TEST(Train, ToySetImprovesOnInitialValidationError) {
  const auto dir = temp_dir("toy");
  ASSERT_EQ(run({"make-dataset", "--input", "synthetic", "--output", (dir / "d").string(), "--synthetic-count", "300",
                 "--synthetic-height", "8", "--synthetic-width", "8", "--synthetic-strokes", "12", "--val-size",
                 "50", "--test-size", "0", "--seed", "4"})
                .code,
            kExitOk);
  auto val_err = [&](const std::string& epochs) {
    const auto r = run({"train", "--data", (dir / "d").string(), "--output", (dir / ("m" + epochs)).string(),
                        "--hidden", "16", "--lr", "0.05", "--epochs", epochs, "--patience", "0"});
    EXPECT_EQ(r.code, kExitOk) << r.err;
    const auto pos = r.out.find("val_all_err\t");
    EXPECT_NE(pos, std::string::npos) << r.out;
    return std::stod(r.out.substr(pos + 12));
  };
  EXPECT_LT(val_err("5"), val_err("0"));
}
