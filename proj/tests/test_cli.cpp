#include <gtest/gtest.h>

#include <sys/wait.h>

#include <fstream>
#include <set>
#include <sstream>

#include "landval/pipeline/commands.hpp"
#include "test_util.hpp"

namespace landval {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

const fs::path kSmallConfig = fs::path(LANDVAL_SOURCE_DIR) / "configs" / "small.json";

fs::path write_config(const TempDir& dir, const std::string& text) {
  auto p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

std::string config_error(const fs::path& path, const std::vector<std::string>& overrides = {}) {
  try {
    (void)load_run_config(path, overrides, std::nullopt);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LANDVAL_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> read_reports(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = read_text_file(e.path());
  return out;
}

TEST(Config, SyntaxErrorNamesLine) {
  TempDir dir;
  auto p = write_config(dir, "{\n  \"seed\": 1,\n  \"trees\": {\n    \"n_trees\": ,\n  }\n}\n");
  const auto msg = config_error(p);
  EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
}

TEST(Config, WrongTypeNamesField) {
  TempDir dir;
  auto p = write_config(dir, R"({"trees": {"n_trees": "many"}})");
  const auto msg = config_error(p);
  EXPECT_NE(msg.find("trees.n_trees"), std::string::npos) << msg;
  EXPECT_NE(msg.find("integer"), std::string::npos) << msg;
}

TEST(Config, UnknownFieldRejected) {
  TempDir dir;
  auto p = write_config(dir, R"({"pairs": {"radus_km": 3}})");
  EXPECT_NE(config_error(p).find("pairs.radus_km"), std::string::npos);
}

TEST(Config, InvalidValueRejected) {
  TempDir dir;
  auto p = write_config(dir, R"({"split": {"train": 0.9, "val": 0.1, "test": 0.1}})");
  EXPECT_FALSE(config_error(p).empty());
  EXPECT_FALSE(config_error(kSmallConfig, {"pairs.tau=-1"}).empty());
  EXPECT_FALSE(config_error(kSmallConfig, {"no_equals_sign"}).empty());
  EXPECT_FALSE(config_error(dir / "absent.json").empty());
}

TEST(Config, OverridesAndSeed) {
  auto c = load_run_config(kSmallConfig, {"trees.n_trees=7", "evaluation.target_split=val"}, 99);
  EXPECT_EQ(c.trees.n_trees, 7);
  EXPECT_EQ(c.eval.target_split, "val");
  EXPECT_EQ(c.seed, 99u);
  EXPECT_EQ(c.world.n_parcels, 300u);
}

TEST(Config, CanonicalJsonRoundTrips) {
  auto c = load_run_config(kSmallConfig, {}, std::nullopt);
  EXPECT_EQ(config_to_json(config_from_json(config_to_json(c))), config_to_json(c));
}

TEST(Config, RunDirectoryIgnoresOutputRoot) {
  auto a = load_run_config(kSmallConfig, {}, std::nullopt);
  auto b = load_run_config(kSmallConfig, {"output_root=elsewhere"}, std::nullopt);
  auto c = load_run_config(kSmallConfig, {}, 6);
  EXPECT_EQ(run_directory(a).filename(), run_directory(b).filename());
  EXPECT_NE(run_directory(a).filename(), run_directory(c).filename());
  EXPECT_EQ(run_directory(c).filename().string().substr(run_directory(c).filename().string().size() - 3), "-s6");
}

TEST(Commands, MissingArtifactNamesProducer) {
  TempDir dir;
  auto cfg = load_run_config(kSmallConfig, {"output_root=" + (dir / "runs").string()}, std::nullopt);
  std::ostringstream log;
  const pipeline::Run run(cfg, log);
  try {
    pipeline::cmd_build_pairs(run);
    FAIL() << "expected a missing-artifact error";
  } catch (const pipeline::MissingArtifact& e) {
    EXPECT_NE(std::string(e.what()).find("landval generate"), std::string::npos) << e.what();
  }
  pipeline::cmd_generate(run);
  pipeline::cmd_build_pairs(run);
  EXPECT_THROW(pipeline::cmd_tune_ensemble(run), pipeline::MissingArtifact);
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  auto bad = write_config(dir, R"({"pairs": {"radus_km": 3}})");
  EXPECT_EQ(run_cli("train --config " + bad.string()), 2);
  const std::string good = "--config " + kSmallConfig.string() + " --set output_root=" + (dir / "runs").string();
  EXPECT_EQ(run_cli("evaluate " + good), 1);
  EXPECT_EQ(run_cli("generate " + good + " --seed 3"), 0);
  EXPECT_NE(run_cli("no-such-command " + good), 0);
}

class SmallPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir;
    auto cfg = load_run_config(kSmallConfig, {"output_root=" + (dir_->path() / "runs").string()}, std::nullopt);
    run_ = new pipeline::Run(cfg, log_);
    pipeline::run_all(*run_);
  }
  static void TearDownTestSuite() {
    delete run_;
    delete dir_;
  }

  static inline TempDir* dir_ = nullptr;
  static inline pipeline::Run* run_ = nullptr;
  static inline std::ostringstream log_;
};

TEST_F(SmallPipeline, WritesEveryReport) {
  const auto reports = read_reports(run_->at("reports"));
  for (const char* f : {"model_comparison.csv", "headline.csv", "per_province.csv", "valuation_test.csv",
                        "coverage_mape/ensemble.csv", "roc/ensemble.csv"})
    EXPECT_TRUE(reports.count(f)) << f;
  EXPECT_EQ(reports.at("model_comparison.csv").rfind("model,val_auc,test_auc\n", 0), 0u);
  std::istringstream head(reports.at("headline.csv"));
  std::string line;
  std::set<std::string> models;
  std::getline(head, line);
  while (std::getline(head, line)) models.insert(line.substr(0, line.find(',')));
  EXPECT_EQ(models.size(), 8u);
  EXPECT_TRUE(models.count("gbt_regression"));
}

TEST_F(SmallPipeline, EvaluateRerunIsByteIdentical) {
  const auto before = read_reports(run_->at("reports"));
  pipeline::cmd_evaluate(*run_);
  EXPECT_EQ(read_reports(run_->at("reports")), before);
}

TEST_F(SmallPipeline, PredictIsolatedParcelIsUncovered) {
  const auto a = pipeline::load_pair_artifacts(*run_);
  std::vector<bool> has_pairs(a.dataset.size(), false);
  for (const auto& r : a.pairs) has_pairs[r.primary] = true;
  const auto it = std::find(has_pairs.begin(), has_pairs.end(), false);
  ASSERT_NE(it, has_pairs.end()) << "small world has no isolated parcel";
  const auto& id = a.dataset[std::size_t(it - has_pairs.begin())].id;
  std::ostringstream out;
  EXPECT_EQ(pipeline::cmd_predict(*run_, id, out), 0);
  EXPECT_NE(out.str().find("covered: false"), std::string::npos) << out.str();
}

TEST_F(SmallPipeline, PredictCoveredParcelListsContributors) {
  const auto a = pipeline::load_pair_artifacts(*run_);
  std::ostringstream out;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < a.dataset.size() && covered == 0; ++i) {
    if (a.split[i] == Split::train) continue;
    out.str("");
    pipeline::cmd_predict(*run_, a.dataset[i].id, out);
    covered += out.str().find("covered: true") != std::string::npos;
  }
  ASSERT_EQ(covered, 1u);
  EXPECT_NE(out.str().find("predicted_price: "), std::string::npos);
  EXPECT_NE(out.str().find("contributors:\n  "), std::string::npos);
  EXPECT_THROW(pipeline::cmd_predict(*run_, "no-such-parcel", out), DataError);
}

}  // namespace
}  // namespace landval
