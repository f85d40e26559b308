// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "rescap/errors.hpp"
#include "rescap/jsonl.hpp"
#include "run_config.hpp"
#include "test_support.hpp"

namespace rescap::cli {
namespace {

namespace fs = std::filesystem;
using rescap::testing::TempDir;

using EnvMap = std::map<std::string, std::string>;

EnvLookup env_from(EnvMap vars) {
  return [vars = std::move(vars)](const std::string& name) -> std::optional<std::string> {
    if (const auto it = vars.find(name); it != vars.end()) return it->second;
    return std::nullopt;
  };
}

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun run(const std::vector<std::string>& args, EnvMap env = {}) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err, env_from(std::move(env)));
  return {code, out.str(), err.str()};
}

TEST(RunConfig, FlagsBeatEnvBeatFile) {
  TempDir tmp;
  const auto file = tmp / "cfg.json";
  std::ofstream(file) << R"({"seed": 1, "jobs": 2, "port": 9001, "zooms": [4, 16]})";
  const auto cfg = resolve_config(file, env_from({{"RESCAP_SEED", "5"}, {"RESCAP_JOBS", "3"}}), {{"seed", "9"}});
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.jobs, 3);
  EXPECT_EQ(cfg.port, 9001);
  EXPECT_EQ(cfg.zooms, (std::vector<double>{4, 16}));
  EXPECT_EQ(cfg.run_id, "default");
}

TEST(RunConfig, DefaultsAndDerivedPaths) {
  const auto cfg = resolve_config(std::nullopt, env_from({}), {});
  EXPECT_FALSE(cfg.seed);
  EXPECT_EQ(cfg.seed_or_default(), 0u);
  EXPECT_EQ(cfg.zooms, (std::vector<double>{4, 6, 9, 16}));
  EXPECT_EQ(cfg.resolved_run_dir(), fs::path("runs") / "default");
  EXPECT_GE(cfg.resolved_jobs(), 1);
  const auto with_dir = resolve_config(std::nullopt, env_from({}), {{"run_dir", "/tmp/x"}});
  EXPECT_EQ(with_dir.resolved_run_dir(), fs::path("/tmp/x"));
}

TEST(RunConfig, MapsAndListsParse) {
  RunConfig c;
  apply_setting(c, "backends", "supir=http://127.0.0.1:9000,stub=stub");
  apply_setting(c, "holdout_zoom", "bicubic=9");
  apply_setting(c, "schedule", "80,110,140");
  EXPECT_EQ(c.backends.at("supir"), "http://127.0.0.1:9000");
  EXPECT_EQ(c.holdout_zoom.at("bicubic"), 9.0);
  EXPECT_EQ(c.schedule.word_targets, (std::vector<int>{80, 110, 140}));
}

TEST(RunConfig, RejectsUnknownAndMalformedSettings) {
  RunConfig c;
  EXPECT_THROW(apply_setting(c, "colour", "red"), InvalidInputError);
  EXPECT_THROW(apply_setting(c, "seed", "abc"), InvalidInputError);
  EXPECT_THROW(apply_setting(c, "lease_ttl_s", "0"), InvalidInputError);
  EXPECT_THROW(apply_json(c, Json{{"colour", "red"}}), InvalidInputError);
  TempDir tmp;
  std::ofstream(tmp / "bad.json") << "{";
  EXPECT_THROW(load_config_file(tmp / "bad.json"), InvalidInputError);
  EXPECT_THROW(apply_env(c, env_from({{"RESCAP_SEED", "x"}})), InvalidInputError);
}

TEST(RunConfig, JsonCoversEverySetting) {
  const auto j = to_json_value(RunConfig{});
  for (const auto& key : setting_keys()) EXPECT_TRUE(j.contains(key)) << key;
  RunConfig reloaded;
  apply_json(reloaded, j);
  EXPECT_EQ(to_json_value(reloaded), j);
}

// ---------------------------------------------------------------------------

TEST(Cli, ExitCodesForUsageErrors) {
  EXPECT_EQ(run({}).code, kExitConfig);
  EXPECT_EQ(run({"frobnicate"}).code, kExitConfig);
  EXPECT_EQ(run({"perturb", "--text", "a b"}).code, kExitConfig);
  const auto bad_env = run({"perturb", "--text", "a b", "--ratio", "0.5"}, {{"RESCAP_SEED", "nope"}});
  EXPECT_EQ(bad_env.code, kExitConfig);
  EXPECT_NE(bad_env.err.find("invalid-input"), std::string::npos);
  const auto missing_file = run({"perturb", "--text", "a b", "--ratio", "0.5", "--config", "/nonexistent/c.json"});
  EXPECT_EQ(missing_file.code, kExitConfig);
}

TEST(Cli, VersionAndHelpExitZero) {
  EXPECT_EQ(run({"--version"}).code, kExitOk);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST(Cli, PerturbSeedNoticeAndDeterminism) {
  const auto a = run({"perturb", "--text", "a stone bridge over a narrow river", "--ratio", "0.5"});
  EXPECT_EQ(a.code, kExitOk);
  EXPECT_NE(a.err.find("no seed given"), std::string::npos);
  const auto b = run({"perturb", "--text", "a stone bridge over a narrow river", "--ratio", "0.5", "--seed", "0"});
  EXPECT_EQ(b.err.find("no seed given"), std::string::npos);
  EXPECT_EQ(a.out, b.out);
  const auto j = Json::parse(a.out);
  EXPECT_EQ(j["replaced"], 3);
  EXPECT_EQ(j["word_count"], 7);
}

TEST(Cli, ExtendTokensReportsLengths) {
  std::string text;
  for (int i = 0; i < 30; ++i) text += "word ";
  const auto r = run({"extend-tokens", "--text", text, "--k", "3"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto j = Json::parse(r.out);
  EXPECT_EQ(j["input_length"], 77);
  EXPECT_EQ(j["output_length"], 77 + 3 * 20);
  EXPECT_EQ(j["output_eos"], 31 + 3 * 20);
  EXPECT_EQ(run({"extend-tokens", "--text", "a cat", "--k", "3"}).code, kExitConfig);
  EXPECT_EQ(run({"extend-tokens", "--text", "a", "--k", "1", "--target-length", "200"}).code, kExitConfig);
}

TEST(Cli, FilterHarmfulSplitsCaption) {
  const auto r = run({"filter-harmful", "--text", "A red lamp. The background has a shallow depth of field."});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto j = Json::parse(r.out);
  EXPECT_EQ(j["content_part"], "A red lamp.");
}

TEST(Cli, OffsetEvalReportsMean) {
  TempDir tmp;
  atomic_write_jsonl(tmp / "ann.jsonl", {Json{{"image_id", "a"}, {"optimal_length", 140}},
                                         Json{{"image_id", "b"}, {"optimal_length", 140}}});
  atomic_write_jsonl(tmp / "pred.jsonl", {Json{{"image_id", "a"}, {"cot", "<140, a cat>"}},
                                          Json{{"image_id", "b"}, {"predicted_length", 200}, {"description", "y"}}});
  const auto r = run({"offset-eval", "--annotations", (tmp / "ann.jsonl").string(), "--predictions",
                      (tmp / "pred.jsonl").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(r.out, "pairs 2\nmean 0.75\n");
}

TEST(Cli, ReportFixtureMatchesPrintedTable) {
  const auto r = run({"report", "--fixture", (fs::path(RESCAP_FIXTURE_DIR) / "improvement_table.json").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* pct : {"2.4%", "4.8%", "8.6%"}) EXPECT_NE(r.out.find(pct), std::string::npos) << pct;
  EXPECT_NE(r.out.find("StableSR+captioner vs StableSR"), std::string::npos);
  EXPECT_EQ(run({"report"}).code, kExitConfig);
}

TEST(Cli, GenDataThenExportAndEvaluate) {
  TempDir tmp;
  rescap::testing::write_hq_images(tmp / "hq", 2);
  const auto run_dir = (tmp / "run").string();
  const auto gen = run({"gen-data", "--hq", (tmp / "hq").string(), "--run-dir", run_dir, "--zooms", "4,9,16",
                        "--degraders", "stub", "--seed", "3", "--jobs", "1"});
  ASSERT_EQ(gen.code, kExitOk) << gen.err;
  const auto summary = Json::parse(gen.out);
  EXPECT_EQ(summary["pairs"], 6);
  EXPECT_EQ(summary["candidates"], 42);
  EXPECT_EQ(summary["restorations"], 42);
  EXPECT_TRUE(fs::exists(fs::path(run_dir) / "config.json"));

  const auto exported = run({"export-train", "--run-dir", run_dir, "--out", (tmp / "train.jsonl").string()});
  ASSERT_EQ(exported.code, kExitOk) << exported.err;
  EXPECT_EQ(Json::parse(exported.out)["exported"], 0);

  const auto eval = run({"evaluate", "--run-dir", run_dir, "--variant", "max_len", "--seed", "3", "--jobs", "1"});
  ASSERT_EQ(eval.code, kExitOk) << eval.err;
  std::istringstream lines(eval.out);
  int count = 0;
  for (std::string line; std::getline(lines, line);) {
    EXPECT_EQ(Json::parse(line)["method"], "max_len");
    ++count;
  }
  EXPECT_EQ(count, 12);  // 6 pairs x 2 stub metrics
}

TEST(Cli, SweepWritesCsv) {
  TempDir tmp;
  save_png(tmp / "lq.png", synthetic_image(48, 36, 4));
  const auto r = run({"sweep", "--image", (tmp / "lq.png").string(), "--text", "A stone bridge.", "--k", "0,2,4",
                      "--output-dir", (tmp / "out").string(), "--seed", "1"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(r.out.rfind("k,token_length,stub_sharpness,error\n0,77,", 0), 0u);
  EXPECT_EQ(run({"sweep", "--image", "x.png", "--text", "t", "--k", "1,a"}).code, kExitConfig);
}

// ---------------------------------------------------------------------------
// Help text is frozen in golden files; RESCAP_UPDATE_GOLDEN=1 rewrites them.

class HelpGolden : public ::testing::TestWithParam<std::string> {};

TEST_P(HelpGolden, MatchesFrozenText) {
  const std::string sub = GetParam();
  std::vector<std::string> args;
  if (sub != "rescap") args.push_back(sub);
  args.push_back("--help");
  const auto r = run(args);
  ASSERT_EQ(r.code, kExitOk);
  const auto golden = fs::path(RESCAP_GOLDEN_DIR) / (sub + ".txt");
  const char* update = std::getenv("RESCAP_UPDATE_GOLDEN");
  if (update != nullptr && std::string(update) == "1") {
    atomic_write_text(golden, r.out);
    return;
  }
  ASSERT_TRUE(fs::exists(golden)) << golden << " is missing; rerun with RESCAP_UPDATE_GOLDEN=1";
  EXPECT_EQ(r.out, read_text_file(golden));
}

INSTANTIATE_TEST_SUITE_P(Subcommands, HelpGolden,
                         ::testing::Values("rescap", "extend-tokens", "perturb", "filter-harmful", "caption",
                                           "offset-eval", "gen-data", "restore-batch", "annotate-serve",
                                           "export-train", "evaluate", "report", "sweep"),
                         [](const ::testing::TestParamInfo<std::string>& info) {
                           std::string name = info.param;
                           std::replace(name.begin(), name.end(), '-', '_');
                           return name;
                         });

}  // namespace
}  // namespace rescap::cli
