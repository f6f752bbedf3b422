#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "landval/ensemble.hpp"
#include "landval/geoindex.hpp"
#include "landval/metrics.hpp"
#include "landval/neural/training.hpp"
#include "landval/pairgen.hpp"
#include "landval/pipeline/config.hpp"
#include "landval/synth.hpp"
#include "landval/tile_store.hpp"
#include "landval/tilefetch.hpp"
#include "landval/trees.hpp"
#include "landval/valuation.hpp"

namespace landval::pipeline {

namespace fs = std::filesystem;

/// A stage input is absent; the message names the command that produces it.
struct MissingArtifact : Error {
  MissingArtifact(const fs::path& path, std::string_view producer)
      : Error("missing " + path.string() + "; run `landval " + std::string(producer) + "` first") {}
};

/// Stream ids for per-stage seeds derived from the master seed.
enum class Stage : std::uint64_t {
  world = 0,
  split = 1,
  selection = 2,
  extra_trees = 3,
  random_forest = 4,
  extra_trees_no_image = 5,
  dl_small = 6,
  dl_large = 7,
  rf_on_latent = 8,
  ensemble = 9,
};

inline constexpr std::string_view kNoImageModel = "extra_trees_no_image";
inline constexpr std::string_view kEnsembleModel = "ensemble";
inline constexpr std::string_view kRegressionModel = "gbt_regression";

// ---------------------------------------------------------------------------
// Run directory layout
// ---------------------------------------------------------------------------

class Run {
 public:
  Run(RunConfig cfg, std::ostream& log) : cfg_(std::move(cfg)), dir_(run_directory(cfg_)), log_(&log) {}

  [[nodiscard]] const RunConfig& config() const { return cfg_; }
  [[nodiscard]] const fs::path& dir() const { return dir_; }
  [[nodiscard]] std::ostream& log() const { return *log_; }
  [[nodiscard]] std::uint64_t seed(Stage s) const { return mix_seed(cfg_.seed, std::uint64_t(s)); }

  [[nodiscard]] fs::path at(const fs::path& rel) const { return dir_ / rel; }

  [[nodiscard]] fs::path require(const fs::path& rel, std::string_view producer) const {
    auto p = at(rel);
    if (!fs::exists(p)) throw MissingArtifact(p, producer);
    return p;
  }

  [[nodiscard]] fs::path parcels_path() const {
    if (!cfg_.parcels_csv.empty()) {
      if (!fs::exists(cfg_.parcels_csv)) throw ConfigError("data.parcels_csv does not exist: " + cfg_.parcels_csv.string());
      return cfg_.parcels_csv;
    }
    return require("world/parcels.csv", "generate");
  }

  [[nodiscard]] fs::path tiles_root() const {
    if (cfg_.tile_source == "directory") {
      if (!fs::is_directory(cfg_.tiles_dir)) throw ConfigError("tiles.dir does not exist: " + cfg_.tiles_dir.string());
      return cfg_.tiles_dir;
    }
    if (cfg_.tile_source == "fetch") return require("tiles", "fetch-tiles");
    return require("world/tiles", "generate");
  }

  [[nodiscard]] WorldConfig world_config() const {
    WorldConfig w = cfg_.world;
    w.seed = seed(Stage::world);
    return w;
  }

  void write_config() const { write_text_file(at("config.json"), config_to_json(cfg_).dump(2) + "\n"); }

 private:
  RunConfig cfg_;
  fs::path dir_;
  std::ostream* log_;
};

class StageTimer {
 public:
  StageTimer(const Run& run, std::string name) : run_(run), name_(std::move(name)) {}
  ~StageTimer() {
    const auto s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    run_.log() << "  " << name_ << ": " << format_fixed(s, 1) << " s\n";
  }
  StageTimer(const StageTimer&) = delete;
  StageTimer& operator=(const StageTimer&) = delete;

 private:
  const Run& run_;
  std::string name_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// ---------------------------------------------------------------------------
// Shared loaders
// ---------------------------------------------------------------------------

/// Parcels, split, feature schema and pairs as written by build-pairs.
struct PairArtifacts {
  Dataset dataset;
  SplitAssignment split;
  FeatureSchema schema;
  std::vector<PairRecord> pairs;
};

inline PairArtifacts load_pair_artifacts(const Run& run) {
  PairArtifacts a{load_parcels(run.parcels_path()), {}, {}, {}};
  a.split = load_split(run.require("pairs/split.csv", "build-pairs"), a.dataset);
  a.schema = FeatureSchema::from_json(json::parse(read_text_file(run.require("pairs/schema.json", "build-pairs"))));
  a.pairs = load_pairs(run.require("pairs/pairs.csv", "build-pairs"), a.dataset, a.schema);
  return a;
}

inline std::vector<std::size_t> indices_where(const std::vector<PairRecord>& pairs, Split s) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (pairs[i].split == s) out.push_back(i);
  return out;
}

template <class V>
std::vector<V> gather(const std::vector<V>& v, const std::vector<std::size_t>& idx) {
  std::vector<V> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

inline json read_json(const fs::path& p) { return json::parse(read_text_file(p)); }

// ---------------------------------------------------------------------------
// Pair scores table
// ---------------------------------------------------------------------------

/// Member and baseline scores for every pair, aligned with pairs.csv.
struct PairScores {
  std::array<std::vector<double>, kNumMembers> members;
  std::vector<double> no_image;

  [[nodiscard]] std::size_t size() const { return no_image.size(); }
};

inline std::string pair_scores_csv(const Dataset& ds, const std::vector<PairRecord>& pairs, const PairScores& s) {
  std::string out = "primary_id,neighbor_id,split,label";
  for (auto m : kEnsembleMembers) out += "," + std::string(m);
  out += "," + std::string(kNoImageModel) + "\n";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& r = pairs[i];
    out += ds[r.primary].id + ',' + ds[r.neighbor].id + ',' + std::string(to_string(r.split)) + ',' +
           std::to_string(r.label);
    for (const auto& m : s.members) out += ',' + format_double(m[i]);
    out += ',' + format_double(s.no_image[i]) + '\n';
  }
  return out;
}

inline PairScores load_pair_scores(const fs::path& path, const Dataset& ds, const std::vector<PairRecord>& pairs) {
  const auto lines = read_lines(path);
  const std::size_t width = 4 + kNumMembers + 1;
  if (lines.empty() || split_csv_line(lines[0]).size() != width) throw DataError("bad header in " + path.string());
  PairScores s;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const auto f = split_csv_line(lines[ln]);
    const std::size_t k = s.size();
    if (f.size() != width) throw DataError("wrong field count in " + path.string(), ln + 1);
    if (k >= pairs.size() || f[0] != ds[pairs[k].primary].id || f[1] != ds[pairs[k].neighbor].id)
      throw DataError("pair scores do not line up with pairs.csv; rerun `landval train`", ln + 1);
    double v = 0;
    for (std::size_t m = 0; m < kNumMembers; ++m) {
      if (!parse_double(f[4 + m], v)) throw DataError("bad score", ln + 1);
      s.members[m].push_back(v);
    }
    if (!parse_double(f[4 + kNumMembers], v)) throw DataError("bad score", ln + 1);
    s.no_image.push_back(v);
  }
  if (s.size() != pairs.size()) throw DataError("pair scores do not cover every pair; rerun `landval train`");
  return s;
}

// ---------------------------------------------------------------------------
// Direct price regression baseline
// ---------------------------------------------------------------------------

/// Parcel-level features for the regression baseline: continuous attributes,
/// categorical codes, province code, coordinates and appraisal date.
inline std::vector<double> regression_features(const Dataset& ds, const LandParcel& p) {
  const auto& sch = ds.schema();
  std::vector<double> x(p.continuous.begin(), p.continuous.end());
  for (std::size_t a = 0; a < p.categorical.size(); ++a) x.push_back(double(sch.category_index(a, p.categorical[a])));
  x.push_back(double(sch.province_index(p.province)));
  x.push_back(p.lat);
  x.push_back(p.lon);
  x.push_back(double(p.appraisal_date.days_since_epoch()));
  return x;
}

inline Matrix regression_matrix(const Dataset& ds, const std::vector<std::size_t>& parcels) {
  Matrix X;
  for (std::size_t r = 0; r < parcels.size(); ++r) {
    auto x = regression_features(ds, ds[parcels[r]]);
    if (r == 0) X = Matrix(parcels.size(), x.size());
    std::copy(x.begin(), x.end(), X.row(r).begin());
  }
  return X;
}

// ---------------------------------------------------------------------------
// Trained members
// ---------------------------------------------------------------------------

inline nn::NetConfig net_config(const NeuralModelConfig& m, const nn::NeuralData& d, std::size_t n_continuous,
                                std::uint64_t seed) {
  nn::NetConfig c;
  c.image_side = m.image_side;
  c.in_channels = d.channels();
  c.tower_widths = m.tower_widths;
  c.freeze_blocks = m.freeze_blocks;
  c.vocab_sizes = d.vocab_sizes;
  c.n_continuous = int(n_continuous);
  c.hidden = m.hidden;
  c.dropout = m.dropout;
  c.symmetric = m.symmetric;
  c.seed = seed;
  return c;
}

/// Every model that scores pairs, loaded from a run's models/ directory.
struct TrainedModels {
  TreeEnsemble extra_trees;
  TreeEnsemble random_forest;
  TreeEnsemble extra_trees_no_image;
  TreeEnsemble rf_on_latent;
  std::optional<nn::SimilarityNet<float>> dl_small;
  std::optional<nn::SimilarityNet<float>> dl_large;

  static TrainedModels load(const Run& run) {
    TrainedModels m;
    auto tree = [&](const char* name) {
      return TreeEnsemble::from_json(read_json(run.require(fs::path("models") / (std::string(name) + ".json"), "train")));
    };
    m.extra_trees = tree("extra_trees");
    m.random_forest = tree("random_forest");
    m.extra_trees_no_image = tree("extra_trees_no_image");
    m.rf_on_latent = tree("rf_on_latent");
    m.dl_small = nn::net_from_checkpoint<float>(read_json(run.require("models/dl_small.json", "train")));
    m.dl_large = nn::net_from_checkpoint<float>(read_json(run.require("models/dl_large.json", "train")));
    return m;
  }

  /// Scores `pairs` with every member and the no-image baseline.
  PairScores score(const FeatureSchema& schema, const nn::NeuralData& nd, const std::vector<PairRecord>& pairs) {
    PairScores s;
    const auto cols = schema.selected_indices();
    const auto cols_no_image = schema.without_image_features().selected_indices();
    const auto X = pair_matrix(pairs, cols);
    s.no_image = extra_trees_no_image.predict_scores(pair_matrix(pairs, cols_no_image));
    s.members[2] = extra_trees.predict_scores(X);
    s.members[3] = random_forest.predict_scores(X);
    const auto samples = nn::make_pair_samples(pairs, cols);
    auto small = nn::infer(*dl_small, nd, samples, true);
    s.members[0] = std::move(small.scores);
    s.members[1] = nn::infer(*dl_large, nd, samples).scores;
    s.members[4] = rf_on_latent.predict_scores(small.latents);
    return s;
  }
};

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline int cmd_generate(const Run& run) {
  const auto& cfg = run.config();
  if (!cfg.parcels_csv.empty())
    throw ConfigError("data.parcels_csv is set; `generate` only builds synthetic worlds");
  run.write_config();
  World w;
  {
    StageTimer t(run, "generate world");
    w = generate_world(run.world_config());
  }
  {
    StageTimer t(run, "write world");
    save_world(w, run.at("world"));
  }
  run.log() << "generated " << w.dataset.size() << " parcels and " << w.tiles.size() << " tiles in "
            << run.at("world").string() << "\n";
  return 0;
}

inline int cmd_fetch_tiles(const Run& run, std::shared_ptr<HttpTransport> transport = nullptr) {
  const auto& cfg = run.config();
  run.write_config();
  const auto ds = load_parcels(run.parcels_path());
  FetchConfig fc = cfg.fetch;
  fc.api_key = FetchConfig::api_key_from_env();
  fc.kinds = cfg.kinds();
  if (fc.cache_dir.empty()) fc.cache_dir = run.at("tile_cache");
  TileFetcher fetcher(fc, transport ? std::move(transport) : std::make_shared<HttplibTransport>());
  const TileStore store(run.at("tiles"));
  fs::create_directories(store.root());
  std::size_t ok = 0, failed = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (auto k : fc.kinds) {
      try {
        store.save(fetcher.fetch_tile(ds[i], k));
        ++ok;
      } catch (const FetchError& e) {
        ++failed;
        run.log() << "warning: " << e.what() << "\n";
      }
    }
  run.log() << "stored " << ok << " tiles (" << fetcher.network_calls() << " network requests, " << failed
            << " failures) in " << store.root().string() << "\n";
  return 0;
}

inline int cmd_build_pairs(const Run& run) {
  const auto& cfg = run.config();
  run.write_config();
  const auto ds = load_parcels(run.parcels_path());
  const TileStore store(run.tiles_root());
  const auto kinds = cfg.kinds();
  const auto split = temporal_split(ds, cfg.split, run.seed(Stage::split));

  std::vector<ParcelImagery> imagery;
  {
    StageTimer t(run, "tile colour statistics");
    imagery = compute_parcel_imagery(ds, store, kinds);
  }
  auto schema = make_feature_schema(ds.schema(), kinds);
  std::vector<PairRecord> pairs;
  {
    StageTimer t(run, "pair generation");
    const SpatialIndex index(ds, cfg.pairs.radius_km);
    pairs = build_pairs(ds, index, split, imagery, schema, cfg.pairs);
  }
  const auto train_idx = indices_where(pairs, Split::train);
  if (train_idx.empty()) throw DataError("no train-split pairs; increase pairs.radius_km or add parcels");
  FeatureSelection sel;
  {
    StageTimer t(run, "feature selection");
    const auto train_pairs = gather(pairs, train_idx);
    std::vector<std::size_t> all(schema.size());
    std::iota(all.begin(), all.end(), 0);
    TreeConfig tc = cfg.selection_trees;
    tc.seed = run.seed(Stage::selection);
    sel = select_features(pair_matrix(train_pairs, all), pair_labels(train_pairs), cfg.n_keep, tc);
  }
  schema.selected = sel.mask;

  write_text_file(run.at("pairs/split.csv"), split_to_csv(ds, split));
  write_text_file(run.at("pairs/pairs.csv"), pairs_to_csv(ds, pairs, schema));
  write_text_file(run.at("pairs/schema.json"), schema.to_json().dump(2) + "\n");
  std::string imp = "feature,importance,selected\n";
  for (std::size_t f = 0; f < schema.size(); ++f)
    imp += schema.features[f].name + ',' + format_fixed(sel.importance[f], 6) + ',' + (sel.mask[f] ? "1" : "0") + '\n';
  write_text_file(run.at("pairs/feature_importance.csv"), imp);

  std::size_t pos = 0;
  for (const auto& p : pairs) pos += std::size_t(p.label);
  run.log() << "built " << pairs.size() << " pairs (" << train_idx.size() << " train, "
            << format_fixed(100.0 * double(pos) / double(std::max<std::size_t>(1, pairs.size())), 1)
            << "% similar); kept " << schema.selected_indices().size() << " of " << schema.size() << " features\n";
  return 0;
}

namespace detail {

inline nn::SimilarityNet<float> train_network(const Run& run, const std::string& name, const NeuralModelConfig& mc,
                                              const nn::NeuralData& nd, const std::vector<nn::PairSample>& train_s,
                                              const std::vector<nn::PairSample>& val_s, std::uint64_t seed) {
  StageTimer t(run, name);
  nn::SimilarityNet<float> net(net_config(mc, nd, train_s.front().x.size(), seed));
  nn::TrainConfig tc = mc.train;
  tc.seed = mix_seed(seed, 1);
  const auto res = nn::train(net, nd, train_s, val_s, tc);
  write_text_file(run.at("models/" + name + ".json"), nn::checkpoint_json(net).dump() + "\n");
  write_text_file(run.at("models/" + name + "_history.csv"), nn::history_csv(res));
  run.log() << "  " << name << ": " << res.history.size() << " epochs, best epoch " << res.best_epoch
            << (res.stopped_early ? " (early stop)" : "") << "\n";
  return net;
}

inline TreeEnsemble fit_trees(const Run& run, EnsembleKind kind, const std::string& name, const Matrix& X,
                              const std::vector<int>& y, Stage stage) {
  StageTimer t(run, name);
  TreeConfig tc = run.config().trees;
  tc.seed = run.seed(stage);
  auto model = fit_ensemble(kind, X, y, tc);
  write_text_file(run.at("models/" + name + ".json"), model.to_json().dump() + "\n");
  return model;
}

}  // namespace detail

inline int cmd_train(const Run& run) {
  const auto& cfg = run.config();
  run.write_config();
  const auto a = load_pair_artifacts(run);
  const TileStore store(run.tiles_root());
  const auto& ds = a.dataset;

  const auto train_idx = indices_where(a.pairs, Split::train);
  const auto val_idx = indices_where(a.pairs, Split::val);
  if (train_idx.empty()) throw DataError("no train-split pairs to fit on");
  const auto train_pairs = gather(a.pairs, train_idx);
  const auto val_pairs = gather(a.pairs, val_idx);
  const auto y = pair_labels(train_pairs);
  const auto cols = a.schema.selected_indices();
  const auto cols_no_image = a.schema.without_image_features().selected_indices();
  if (cols_no_image.empty()) throw DataError("feature selection kept only image features; raise pairs.n_keep");
  const auto X = pair_matrix(train_pairs, cols);

  TrainedModels m;
  m.extra_trees = detail::fit_trees(run, EnsembleKind::extra_trees, "extra_trees", X, y, Stage::extra_trees);
  m.random_forest = detail::fit_trees(run, EnsembleKind::random_forest, "random_forest", X, y, Stage::random_forest);
  m.extra_trees_no_image = detail::fit_trees(run, EnsembleKind::extra_trees, std::string(kNoImageModel),
                                             pair_matrix(train_pairs, cols_no_image), y, Stage::extra_trees_no_image);

  const auto nd = nn::make_neural_data(ds, store, a.schema.tile_kinds);
  const auto train_s = nn::make_pair_samples(train_pairs, cols);
  const auto val_s = nn::make_pair_samples(val_pairs, cols);
  m.dl_small = detail::train_network(run, "dl_small", cfg.dl_small, nd, train_s, val_s, run.seed(Stage::dl_small));
  {
    const auto latent = nn::infer(*m.dl_small, nd, train_s, true);
    m.rf_on_latent =
        detail::fit_trees(run, EnsembleKind::random_forest, "rf_on_latent", latent.latents, y, Stage::rf_on_latent);
  }
  m.dl_large = detail::train_network(run, "dl_large", cfg.dl_large, nd, train_s, val_s, run.seed(Stage::dl_large));

  {
    StageTimer t(run, "score all pairs");
    write_text_file(run.at("scores/pair_scores.csv"), pair_scores_csv(ds, a.pairs, m.score(a.schema, nd, a.pairs)));
  }

  {
    StageTimer t(run, "gbt regression");
    std::vector<std::size_t> train_parcels, all(ds.size());
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (a.split[i] == Split::train) train_parcels.push_back(i);
    std::vector<double> log_price;
    for (auto i : train_parcels) log_price.push_back(std::log(ds[i].price));
    const auto gbt = fit_gbt_regressor(regression_matrix(ds, train_parcels), log_price, cfg.gbt);
    write_text_file(run.at("models/gbt.json"), gbt.to_json().dump() + "\n");
    std::string out = "parcel_id,split,actual_price,predicted_price\n";
    const auto Xall = regression_matrix(ds, all);
    for (std::size_t i = 0; i < ds.size(); ++i)
      out += ds[i].id + ',' + std::string(to_string(a.split[i])) + ',' + format_double(ds[i].price) + ',' +
             format_double(std::exp(gbt.predict(Xall.row(i)))) + '\n';
    write_text_file(run.at("scores/gbt_predictions.csv"), out);
  }
  run.log() << "trained " << kNumMembers << " ensemble members, the no-image baseline and the regression baseline\n";
  return 0;
}

inline int cmd_tune_ensemble(const Run& run) {
  const auto& cfg = run.config();
  run.write_config();
  const auto a = load_pair_artifacts(run);
  const auto scores = load_pair_scores(run.require("scores/pair_scores.csv", "train"), a.dataset, a.pairs);
  const auto val_idx = indices_where(a.pairs, Split::val);
  if (val_idx.empty()) throw DataError("no validation pairs to tune on");
  std::array<std::vector<double>, kNumMembers> val_scores;
  for (std::size_t m = 0; m < kNumMembers; ++m) val_scores[m] = gather(scores.members[m], val_idx);
  const auto labels = pair_labels(gather(a.pairs, val_idx));
  const auto res = tune_weights(val_scores, labels, cfg.ensemble_trials, run.seed(Stage::ensemble));
  write_text_file(run.at("ensemble/ensemble.json"), res.spec.to_json().dump(2) + "\n");
  std::string out = "model,weight,val_auc\n";
  for (std::size_t m = 0; m < kNumMembers; ++m)
    out += std::string(kEnsembleMembers[m]) + ',' + format_fixed(res.spec.weights[m], 6) + ',' +
           format_fixed(res.member_val_auc[m], 6) + '\n';
  out += std::string(kEnsembleModel) + ",1.000000," + format_fixed(res.val_auc, 6) + '\n';
  write_text_file(run.at("ensemble/tuning.csv"), out);
  run.log() << "tuned ensemble: validation AUC " << format_fixed(res.val_auc, 4) << "\n";
  return 0;
}

/// Headline row for one scoring model's coverage-MAPE curve.
struct Headline {
  std::string model;
  std::optional<double> coverage_at_mape;
  std::optional<CurvePoint> operating;
};

inline int cmd_evaluate(const Run& run) {
  const auto& cfg = run.config();
  run.write_config();
  const auto a = load_pair_artifacts(run);
  const auto& ds = a.dataset;
  const auto scores = load_pair_scores(run.require("scores/pair_scores.csv", "train"), ds, a.pairs);
  const auto spec = EnsembleSpec::from_json(read_json(run.require("ensemble/ensemble.json", "tune-ensemble")));
  const auto gbt_path = run.require("scores/gbt_predictions.csv", "train");
  const Split target = parse_split(cfg.eval.target_split);
  const auto basis = parse_coverage_basis(cfg.eval.coverage_basis);
  const auto grid = theta_grid(cfg.eval.theta_points);

  std::vector<std::pair<std::string, std::vector<double>>> models;
  for (std::size_t m = 0; m < kNumMembers; ++m) models.emplace_back(kEnsembleMembers[m], scores.members[m]);
  models.emplace_back(kNoImageModel, scores.no_image);
  models.emplace_back(kEnsembleModel, combine_all(spec, scores.members));

  const auto val_idx = indices_where(a.pairs, Split::val);
  const auto target_idx = indices_where(a.pairs, target);
  const auto val_labels = pair_labels(gather(a.pairs, val_idx));
  const auto target_labels = pair_labels(gather(a.pairs, target_idx));
  auto safe_auc = [](const std::vector<double>& s, const std::vector<int>& y) -> std::string {
    const auto pos = std::count(y.begin(), y.end(), 1);
    if (pos == 0 || pos == std::ptrdiff_t(y.size())) return "";
    return format_fixed(auc(s, y), 6);
  };

  std::string comparison = "model,val_auc," + cfg.eval.target_split + "_auc\n";
  std::vector<Headline> headlines;
  for (const auto& [name, s] : models) {
    comparison += name + ',' + safe_auc(gather(s, val_idx), val_labels) + ',' +
                  safe_auc(gather(s, target_idx), target_labels) + '\n';
    const auto ts = gather(s, target_idx);
    const auto pos = std::count(target_labels.begin(), target_labels.end(), 1);
    if (pos > 0 && pos < std::ptrdiff_t(target_labels.size()))
      write_text_file(run.at("reports/roc/" + name + ".csv"), roc_csv(roc_curve(ts, target_labels)));
    const Split targets[] = {target};
    const auto inputs = group_scored_pairs(ds, a.split, a.pairs, s, targets);
    const auto curve = coverage_mape_curve(ds, inputs, grid, basis);
    write_text_file(run.at("reports/coverage_mape/" + name + ".csv"), curve_csv(curve));
    headlines.push_back({name, curve.coverage_at_mape(cfg.eval.headline_mape), curve.operating_point(cfg.eval.min_coverage)});
    if (name == kEnsembleModel) {
      write_text_file(run.at("reports/per_province.csv"), per_province_csv(per_province_report(ds, inputs, grid, basis)));
      write_text_file(run.at("reports/valuation_" + cfg.eval.target_split + ".csv"),
                      valuation_results_csv(value_all(ds, inputs, cfg.eval.theta)));
    }
  }
  write_text_file(run.at("reports/model_comparison.csv"), comparison);

  // Direct regression baseline over every target-split parcel.
  double ape = 0;
  std::size_t n = 0;
  const auto lines = read_lines(gbt_path);
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const auto f = split_csv_line(lines[ln]);
    double actual = 0, predicted = 0;
    if (f.size() != 4 || !parse_double(f[2], actual) || !parse_double(f[3], predicted))
      throw DataError("bad row in " + gbt_path.string(), ln + 1);
    if (parse_split(f[1]) != target) continue;
    ape += std::abs(predicted - actual) / actual;
    ++n;
  }
  if (n == 0) throw DataError("no " + cfg.eval.target_split + " parcels in " + gbt_path.string());
  const double gbt_mape = 100.0 * ape / double(n);

  const std::string mape_col = "coverage_at_mape_" + format_fixed(cfg.eval.headline_mape, 0);
  std::string head = "model," + mape_col + ",operating_theta,operating_coverage_pct,operating_mape_pct\n";
  auto opt = [](const std::optional<double>& v, int digits) { return v ? format_fixed(*v, digits) : std::string(); };
  for (const auto& h : headlines)
    head += h.model + ',' + opt(h.coverage_at_mape, 4) + ',' + (h.operating ? format_fixed(h.operating->theta, 2) : "") +
            ',' + (h.operating ? format_fixed(h.operating->coverage_pct, 4) : "") + ',' +
            (h.operating ? opt(h.operating->mape_pct, 4) : "") + '\n';
  head += std::string(kRegressionModel) + ',' + (gbt_mape <= cfg.eval.headline_mape ? "100.0000" : "") +
          ",,100.0000," + format_fixed(gbt_mape, 4) + '\n';
  write_text_file(run.at("reports/headline.csv"), head);

  run.log() << comparison << head << "reports written to " << run.at("reports").string() << "\n";
  return 0;
}

inline int cmd_predict(const Run& run, const std::string& parcel_id, std::ostream& out) {
  const auto& cfg = run.config();
  const auto a = load_pair_artifacts(run);
  const auto& ds = a.dataset;
  const auto idx = ds.find(parcel_id);
  if (!idx) throw DataError("unknown parcel id '" + parcel_id + "'");
  std::vector<PairRecord> pairs;
  for (const auto& r : a.pairs)
    if (r.primary == *idx) pairs.push_back(r);
  const auto& p = ds[*idx];
  out << "parcel: " << p.id << " (" << p.province << ", " << to_string(a.split[*idx]) << ")\n";
  if (pairs.empty()) {
    out << "covered: false\nreason: no train-split neighbors within " << format_fixed(cfg.pairs.radius_km, 1)
        << " km\n";
    return 0;
  }
  auto models = TrainedModels::load(run);
  const auto spec = EnsembleSpec::from_json(read_json(run.require("ensemble/ensemble.json", "tune-ensemble")));
  const auto nd = nn::make_neural_data(ds, TileStore(run.tiles_root()), a.schema.tile_kinds);
  const auto s = models.score(a.schema, nd, pairs);
  const auto combined = combine_all(spec, s.members);
  std::vector<ScoredNeighbor> nbrs;
  for (std::size_t k = 0; k < pairs.size(); ++k) nbrs.push_back({ds[pairs[k].neighbor].id, combined[k], ds[pairs[k].neighbor].price});
  const auto r = value_parcel(p, nbrs, cfg.eval.theta);
  out << "theta: " << format_fixed(cfg.eval.theta, 2) << "\n";
  out << "candidates: " << r.n_candidates << "\n";
  out << "covered: " << (r.covered ? "true" : "false") << "\n";
  if (r.covered) {
    out << "predicted_price: " << format_fixed(*r.predicted_price, 2) << "\n";
    out << "actual_price: " << format_fixed(r.actual_price, 2) << "\n";
    out << "contributors:\n";
    for (const auto& c : r.contributors)
      out << "  " << c.id << " score=" << format_fixed(c.score, 4) << " price=" << format_fixed(c.price, 2) << "\n";
  }
  return 0;
}

inline int run_all(const Run& run) {
  if (run.config().parcels_csv.empty()) cmd_generate(run);
  cmd_build_pairs(run);
  cmd_train(run);
  cmd_tune_ensemble(run);
  return cmd_evaluate(run);
}

}  // namespace landval::pipeline
