#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "landval/pipeline/commands.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "Run configuration (JSON)")->required();
  cmd->add_option("--set", args.overrides, "Override a config field, e.g. --set trees.n_trees=50")
      ->allow_extra_args(false);
  cmd->add_option("--seed", args.seed, "Master seed (overrides the config)");
}

}  // namespace

int main(int argc, char** argv) {
  namespace pl = landval::pipeline;
  CLI::App app{"landval: land valuation from neighbor similarity"};
  app.require_subcommand(1);
  CommonArgs args;
  std::string parcel_id;

  struct Entry {
    const char* name;
    const char* help;
  };
  const Entry entries[] = {
      {"generate", "Generate the synthetic parcel world and its tiles"},
      {"fetch-tiles", "Download satellite and segmented tiles for every parcel"},
      {"build-pairs", "Split parcels, build neighbor pairs and select features"},
      {"train", "Train every ensemble member and the baselines"},
      {"tune-ensemble", "Tune ensemble weights on the validation split"},
      {"evaluate", "Write model comparison, coverage-MAPE and per-province reports"},
      {"predict", "Value a single parcel and list its contributors"},
      {"run", "generate, build-pairs, train, tune-ensemble and evaluate in sequence"},
  };
  std::vector<CLI::App*> subs;
  for (const auto& e : entries) {
    auto* s = app.add_subcommand(e.name, e.help);
    add_common(s, args);
    subs.push_back(s);
  }
  subs[6]->add_option("--parcel", parcel_id, "Parcel id to value")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = landval::load_run_config(args.config, args.overrides, args.seed);
    const pl::Run run(std::move(cfg), std::cerr);
    const std::string name = app.get_subcommands().front()->get_name();
    if (name != "predict") std::cerr << "run directory: " << run.dir().string() << "\n";
    if (name == "generate") return pl::cmd_generate(run);
    if (name == "fetch-tiles") return pl::cmd_fetch_tiles(run);
    if (name == "build-pairs") return pl::cmd_build_pairs(run);
    if (name == "train") return pl::cmd_train(run);
    if (name == "tune-ensemble") return pl::cmd_tune_ensemble(run);
    if (name == "evaluate") return pl::cmd_evaluate(run);
    if (name == "predict") return pl::cmd_predict(run, parcel_id, std::cout);
    return pl::run_all(run);
  } catch (const landval::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
