#include <cstdlib>
#include <functional>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "handcast_cli/commands.hpp"
#include "fixtures.hpp"
#include "handcast/data.hpp"
#include "handcast_cli/run_config.hpp"

namespace fs = std::filesystem;
using handcast::cli::run;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small model and data so that every subcommand finishes in well under a second.
const std::vector<std::string> kTiny = {
    "--set", "gen.d_img=4",     "--set", "model.d_z=16",     "--set", "model.n_layers=1",
    "--set", "model.n_heads=2", "--set", "model.d_ff=32",    "--set", "model.N=5",
    "--set", "model.schedule=scaled-linear", "--set", "train.batch_size=2", "--set",
    "train.log_every=1"};

std::vector<std::string> with_tiny(std::vector<std::string> args) {
  args.insert(args.end(), kTiny.begin(), kTiny.end());
  return args;
}

class CliTest : public ::testing::Test {
 protected:
  fixture::TempDir dir{"cli"};
  fs::path data() const { return dir / "data"; }

  void generate() {
    const Result r = call(with_tiny({"gen", "--out", data().string(), "--n", "4", "--n-val", "3", "--seed", "5"}));
    ASSERT_EQ(r.code, 0) << r.err;
  }
  void train(const std::string& out, int iterations = 3) {
    const Result r = call(with_tiny({"train", "--data", (data() / "train.jsonl").string(), "--out",
                                     (dir / out).string(), "--iterations", std::to_string(iterations)}));
    ASSERT_EQ(r.code, 0) << r.err;
  }
};

}  // namespace

TEST_F(CliTest, GenIsDeterministicAndWritesArtifacts) {
  generate();
  const std::string first = slurp(data() / "train.jsonl");
  ASSERT_TRUE(fs::exists(data() / "val.jsonl"));
  ASSERT_TRUE(fs::exists(data() / "resolved_config.txt"));
  EXPECT_EQ(handcast::load_dataset(data() / "train.jsonl").size(), 4u);
  EXPECT_EQ(handcast::load_dataset(data() / "val.jsonl").size(), 3u);
  generate();
  EXPECT_EQ(slurp(data() / "train.jsonl"), first);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(call({"gen", "--out", data().string(), "--n", "0"}).code, 2);
  EXPECT_EQ(call({"train", "--data", (dir / "missing.jsonl").string(), "--out", (dir / "t").string()}).code, 2);
  EXPECT_EQ(call({"frobnicate"}).code, 2);
  EXPECT_EQ(call({"gen", "--set", "gen.nope=1", "--out", data().string()}).code, 2);
  EXPECT_EQ(call({"gen", "--set", "gen.n=abc", "--out", data().string()}).code, 2);
  EXPECT_EQ(call({"eval", "--data", (dir / "missing.jsonl").string(), "--gt-as-pred"}).code, 2);
  EXPECT_EQ(call({"--help"}).code, 0);
}

TEST_F(CliTest, ConfigPrecedence) {
  std::ofstream(dir / "c.cfg") << "# comment\ngen.n = 6\ngen.n_val = 2\n";
  ASSERT_EQ(call(with_tiny({"gen", "--config", (dir / "c.cfg").string(), "--out", data().string()})).code, 0);
  EXPECT_EQ(handcast::load_dataset(data() / "train.jsonl").size(), 6u);
  ASSERT_EQ(call(with_tiny({"gen", "--config", (dir / "c.cfg").string(), "--set", "gen.n=2", "--out",
                            data().string()})).code, 0);
  EXPECT_EQ(handcast::load_dataset(data() / "train.jsonl").size(), 2u);
  ASSERT_EQ(call(with_tiny({"gen", "--config", (dir / "c.cfg").string(), "--set", "gen.n=2", "--n", "1",
                            "--out", data().string()})).code, 0);
  EXPECT_EQ(handcast::load_dataset(data() / "train.jsonl").size(), 1u);
  EXPECT_NE(slurp(data() / "resolved_config.txt").find("gen.n = 1"), std::string::npos);
}

TEST(RunConfig, EnvironmentLayerSitsBetweenFileAndSet) {
  using handcast::cli::RunConfig;
  EXPECT_EQ(handcast::cli::env_name("gen.seed"), "HANDCAST_GEN_SEED");
  ::setenv("HANDCAST_GEN_SEED", "41", 1);
  RunConfig c;
  c.load_env();
  EXPECT_EQ(c.get_int("gen.seed"), 41);
  c.set("gen.seed", "42");
  EXPECT_EQ(c.get_int("gen.seed"), 42);
  ::unsetenv("HANDCAST_GEN_SEED");
}

TEST_F(CliTest, TrainEvalForecastPlot) {
  generate();
  train("run");
  const fs::path ckpt = dir / "run" / "checkpoint.bin";
  ASSERT_TRUE(fs::exists(ckpt));
  ASSERT_TRUE(fs::exists(dir / "run" / "resolved_config.txt"));
  std::ifstream csv(dir / "run" / "loss.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "iteration,L_joint,L_vis,L_reproj,L_total");

  // Resume to 5 total iterations.
  const Result resumed = call(with_tiny({"train", "--data", (data() / "train.jsonl").string(), "--out",
                                         (dir / "run").string(), "--resume", ckpt.string(), "--iterations", "5"}));
  ASSERT_EQ(resumed.code, 0) << resumed.err;

  const std::string val = (data() / "val.jsonl").string();
  const Result ev = call(with_tiny({"eval", "--data", val, "--ckpt", ckpt.string(), "--baselines", "static,cvm",
                                    "--train-data", (data() / "train.jsonl").string(), "--out",
                                    (dir / "ev").string()}));
  ASSERT_EQ(ev.code, 0) << ev.err;
  const auto report = nlohmann::json::parse(slurp(dir / "ev" / "report.json"));
  ASSERT_EQ(report.at("methods").size(), 3u);
  EXPECT_EQ(report["methods"][0]["method"], "model");
  EXPECT_TRUE(fs::exists(dir / "ev" / "report.txt"));

  const fs::path fc = dir / "fc.json";
  const Result f = call(with_tiny({"forecast", "--ckpt", ckpt.string(), "--data", val, "--index", "1", "--out",
                                   fc.string(), "--seed", "3"}));
  ASSERT_EQ(f.code, 0) << f.err;
  const auto j = nlohmann::json::parse(slurp(fc));
  EXPECT_EQ(j.at("pred").size(), 30u);
  EXPECT_EQ(j.at("vis").size(), 20u);
  for (const auto& row : j["vis"]) {
    for (const auto& v : row) {
      EXPECT_GT(v.get<double>(), 0.0);
      EXPECT_LT(v.get<double>(), 1.0);
    }
  }
  const std::string first = slurp(fc);
  ASSERT_EQ(call(with_tiny({"forecast", "--ckpt", ckpt.string(), "--data", val, "--index", "1", "--out",
                            fc.string(), "--seed", "3"})).code, 0);
  EXPECT_EQ(slurp(fc), first);
  EXPECT_NE(call(with_tiny({"forecast", "--ckpt", ckpt.string(), "--data", val, "--id", "nope", "--out",
                            fc.string()})).code, 0);

  const Result p = call({"plot", "--forecast", fc.string(), "--per-timestep", (dir / "ev" / "report.json").string(),
                         "--out", (dir / "plots").string()});
  ASSERT_EQ(p.code, 0) << p.err;
  int svgs = 0;
  for (const auto& e : fs::directory_iterator(dir / "plots")) svgs += e.path().extension() == ".svg";
  EXPECT_GE(svgs, 3);
  EXPECT_TRUE(fs::exists(dir / "plots" / "ade_per_timestep.svg"));
}

TEST_F(CliTest, GroundTruthAsPredictionIsZero) {
  generate();
  const Result r = call({"eval", "--data", (data() / "val.jsonl").string(), "--gt-as-pred", "--out",
                         (dir / "gt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(dir / "gt" / "report.json"));
  ASSERT_EQ(j["methods"].size(), 1u);
  const std::string dumped = j["methods"][0].dump();
  // Every numeric metric value is zero or null.
  std::function<void(const nlohmann::json&, const std::string&)> walk = [&](const nlohmann::json& v,
                                                                           const std::string& key) {
    if (v.is_object()) {
      for (auto it = v.begin(); it != v.end(); ++it) walk(it.value(), it.key());
    } else if (v.is_array()) {
      for (const auto& e : v) walk(e, key);
    } else if (v.is_number_float() && key != "vis_accuracy") {
      EXPECT_EQ(v.get<double>(), 0.0) << key;
    }
  };
  walk(j["methods"][0], "");
}

TEST_F(CliTest, JointCountMismatchNamesField) {
  generate();
  train("run", 1);
  std::vector<handcast::Sequence> data{fixture::random_sequence(20, 10, handcast::JointLayout{15, 5}, 4, 1)};
  handcast::save_dataset(dir / "small.jsonl", data);
  const Result r = call({"eval", "--data", (dir / "small.jsonl").string(), "--ckpt",
                         (dir / "run" / "checkpoint.bin").string(), "--out", (dir / "ev").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("J"), std::string::npos) << r.err;
}

TEST_F(CliTest, PlotErrors) {
  std::ofstream(dir / "empty.json") << "{\"methods\": []}";
  EXPECT_EQ(call({"plot", "--per-timestep", (dir / "empty.json").string(), "--out", (dir / "p").string()}).code, 2);
  EXPECT_EQ(call({"plot", "--out", (dir / "p").string()}).code, 2);
  EXPECT_NE(call({"plot", "--forecast", (dir / "missing.json").string(), "--out", (dir / "p").string()}).code, 0);
}
