#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "util.hpp"
#include "vlr/config.hpp"
#include "vlr/error.hpp"

using namespace vlr;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run_cli(const std::string& args) {
  const std::string cmd = std::string(VLR_CLI_PATH) + " " + args + " 2>&1";
  CliRun r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

// First output line naming an existing path.
std::string existing_path(const std::string& s) {
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && std::filesystem::exists(line)) return line;
  return {};
}

}  // namespace

TEST(Config, Defaults) {
  const ExperimentConfig c;
  EXPECT_EQ(c.corpus.train.n, 5000u);
  EXPECT_EQ(c.corpus.test_n, 500u);
  EXPECT_EQ(c.vision.mode, "Tiny");
  EXPECT_EQ(c.vision.d_v, 128);
  EXPECT_EQ(c.vision.encoder_seed, 1337u);
  EXPECT_EQ(c.model.d_h, 64);
  EXPECT_EQ(c.model.layers, 2);
  EXPECT_EQ(c.train.warmup_steps, 100);
  EXPECT_DOUBLE_EQ(c.train.weight_decay, 0.01);
  EXPECT_EQ(c.eval.seeds, (std::vector<std::uint64_t>{0, 1, 2, 3, 4}));
}

TEST(Config, RoundTripAndOverride) {
  ExperimentConfig c;
  c.apply_override("train.beta=0.5");
  c.apply_override("vision.segment_policy=rate:3");
  c.apply_override("render.dpi=96");
  EXPECT_DOUBLE_EQ(c.train.beta, 0.5);
  EXPECT_EQ(c.segment_policy(), SegmentPolicy::fixed_rate(3));
  EXPECT_EQ(c.render.dpi, 96);
  const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(c.precompute_spec().render.dpi, 96);
}

TEST(Config, Errors) {
  ExperimentConfig c;
  EXPECT_THROW(c.apply_override("nodot"), Error);
  EXPECT_THROW(c.apply_override("train.no_such_key=1"), Error);
  EXPECT_THROW(c.apply_override("train.batch_size=\"x\""), Error);
  nlohmann::json j = c.to_json();
  j["bogus_section"] = 1;
  EXPECT_THROW(ExperimentConfig::from_json(j), Error);
}

TEST(Cli, GenData) {
  const std::string out = tu::tmp_dir("cli_gen") + "/train.jsonl";
  const CliRun r = run_cli("gen-data --n 100 --seed 0 --out " + out);
  EXPECT_EQ(r.code, 0) << r.out;
  std::ifstream in(out);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    EXPECT_TRUE(nlohmann::json::accept(line)) << line;
    ++n;
  }
  EXPECT_EQ(n, 100);
}

TEST(Cli, UsageErrors) {
  const CliRun r = run_cli("frobnicate");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("gen-data"), std::string::npos) << r.out;
  EXPECT_EQ(run_cli("").code, 2);
  EXPECT_EQ(run_cli("gen-data").code, 2);
}

TEST(Cli, ConfigAndDataErrors) {
  const std::string dir = tu::tmp_dir("cli_err");
  std::ofstream(dir + "/bad.json") << "{\"train\": {\"lr\": -1}}";
  EXPECT_EQ(run_cli("train --config " + dir + "/bad.json").code, 3);
  EXPECT_EQ(run_cli("precompute --data " + dir + "/missing.jsonl --out " + dir + "/c").code, 4);
}

TEST(Cli, TrainThenEval) {
  const std::string dir = tu::tmp_dir("cli_e2e");
  const nlohmann::json cfg = {
      {"corpus", {{"n", 40}, {"test_n", 10}}},
      {"model", {{"d_h", 16}, {"heads", 2}, {"context", 64}}},
      {"vision", {{"d_v", 16}}},
      {"train", {{"max_steps", 4}, {"batch_size", 2}, {"warmup_steps", 1}}},
      {"eval", {{"run_root", dir + "/runs"}, {"reports_dir", dir + "/reports"}}}};
  std::ofstream(dir + "/desk.json") << cfg.dump(2);
  const CliRun t = run_cli("train --config " + dir + "/desk.json --seed 3");
  ASSERT_EQ(t.code, 0) << t.out;
  const std::string ckpt = existing_path(t.out);
  ASSERT_TRUE(std::filesystem::exists(ckpt)) << ckpt;
  const CliRun e = run_cli("eval --checkpoint " + ckpt + " --reports-dir " + dir + "/reports");
  ASSERT_EQ(e.code, 0) << e.out;
  const std::string rep = existing_path(e.out) + "/report.json";
  ASSERT_TRUE(std::filesystem::exists(rep)) << rep;
  std::ifstream in(rep);
  const nlohmann::json j = nlohmann::json::parse(in);
  EXPECT_TRUE(j.contains("rows"));
}
