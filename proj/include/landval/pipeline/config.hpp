#pragma once

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "landval/core_data.hpp"
#include "landval/metrics.hpp"
#include "landval/neural/training.hpp"
#include "landval/pairgen.hpp"
#include "landval/synth.hpp"
#include "landval/tilefetch.hpp"
#include "landval/trees.hpp"

namespace landval {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Strict JSON binding
// ---------------------------------------------------------------------------

namespace detail {

inline std::string json_type_name(const json& j) {
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  return j.type_name();
}

/// Reads fields of one JSON object, checking types and rejecting unknown keys.
class JsonReader {
 public:
  JsonReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config field '" + where() + "': expected object, got " + json_type_name(j_));
  }

  void get(const char* key, double& out) { read(key, out, [](const json& v) { return v.is_number(); }, "number"); }
  void get(const char* key, bool& out) { read(key, out, [](const json& v) { return v.is_boolean(); }, "boolean"); }
  void get(const char* key, std::string& out) { read(key, out, [](const json& v) { return v.is_string(); }, "string"); }
  void get(const char* key, int& out) { read(key, out, is_int, "integer"); }
  void get(const char* key, std::size_t& out) { read(key, out, is_uint, "non-negative integer"); }
  void get(const char* key, std::vector<int>& out) {
    read(key, out, [](const json& v) { return v.is_array() && std::all_of(v.begin(), v.end(), is_int); },
         "array of integers");
  }
  void get(const char* key, std::vector<std::string>& out) {
    read(key, out,
         [](const json& v) { return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); }); },
         "array of strings");
  }
  void get(const char* key, std::filesystem::path& out) {
    std::string s = out.string();
    get(key, s);
    out = s;
  }

  /// Nested object reader; an absent key yields an empty object.
  JsonReader child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return JsonReader(j_.contains(key) ? j_.at(key) : empty, join(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown config field '" + join(k) + "'");
  }

 private:
  static bool is_int(const json& v) { return v.is_number_integer(); }
  static bool is_uint(const json& v) { return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0); }

  template <class T, class Pred>
  void read(const char* key, T& out, Pred ok, const char* expected) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    if (!ok(v))
      throw ConfigError("config field '" + join(key) + "': expected " + expected + ", got " + json_type_name(v));
    out = v.get<T>();
  }

  [[nodiscard]] std::string where() const { return path_.empty() ? "<root>" : path_; }
  [[nodiscard]] std::string join(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  const json& j_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct NeuralModelConfig {
  int image_side = 64;
  std::vector<int> tower_widths{8, 16, 32, 32};
  int freeze_blocks = 1;
  std::vector<int> hidden{400, 200, 100, 50};
  double dropout = 0.07;
  bool symmetric = false;
  nn::TrainConfig train;
};

struct EvalConfig {
  std::size_t theta_points = 101;
  std::string coverage_basis = "evaluated";
  std::string target_split = "test";
  double headline_mape = 20.0;
  double min_coverage = 50.0;  // operating point: largest theta keeping at least this coverage
  double theta = 0.5;          // threshold for per-parcel valuation output and predict
};

struct RunConfig {
  std::filesystem::path output_root = "runs";
  std::uint64_t seed = 42;

  std::string tile_source = "synthetic";  // synthetic | fetch | directory
  std::filesystem::path parcels_csv;      // external parcels; empty = generated world
  std::filesystem::path tiles_dir;        // for tile_source == directory
  std::vector<std::string> tile_kinds{"satellite", "segmented"};

  WorldConfig world;
  SplitRatios split;
  PairConfig pairs;
  std::size_t n_keep = 16;
  TreeConfig selection_trees;
  TreeConfig trees;
  GbtConfig gbt;
  NeuralModelConfig dl_small;
  NeuralModelConfig dl_large;
  int ensemble_trials = 500;
  EvalConfig eval;
  FetchConfig fetch;

  RunConfig() {
    selection_trees.n_trees = 50;
    dl_small.train.val_monitor_pairs = 1000;
    dl_large.image_side = 128;
    dl_large.train.epochs = 8;
    dl_large.train.pairs_per_epoch = 768;
    dl_large.train.val_monitor_pairs = 1000;
    fetch.cache_dir = "";
  }

  [[nodiscard]] std::vector<TileKind> kinds() const {
    std::vector<TileKind> out;
    for (const auto& k : tile_kinds) out.push_back(parse_tile_kind(k));
    return out;
  }

  void validate() const {
    if (tile_source != "synthetic" && tile_source != "fetch" && tile_source != "directory")
      throw ConfigError("config field 'tiles.source' must be synthetic, fetch or directory");
    if (tile_source == "directory" && tiles_dir.empty())
      throw ConfigError("config field 'tiles.dir' is required when tiles.source is directory");
    if (tile_kinds.empty()) throw ConfigError("config field 'tiles.kinds' must name at least one tile kind");
    (void)kinds();
    world.validate();
    split.validate();
    pairs.validate();
    if (n_keep < 1) throw ConfigError("config field 'pairs.n_keep' must be >= 1");
    selection_trees.validate();
    trees.validate();
    gbt.validate();
    for (const auto* m : {&dl_small, &dl_large}) m->train.validate();
    if (ensemble_trials < 0) throw ConfigError("config field 'ensemble.n_trials' must be >= 0");
    if (eval.theta_points < 1) throw ConfigError("config field 'evaluation.theta_points' must be >= 1");
    (void)parse_coverage_basis(eval.coverage_basis);
    (void)parse_split(eval.target_split);
    check_theta(eval.theta);
  }
};

namespace detail {

inline void bind(JsonReader r, TreeConfig& c) {
  r.get("n_trees", c.n_trees);
  r.get("max_depth", c.max_depth);
  r.get("min_leaf", c.min_leaf);
  r.get("mtry", c.mtry);
  r.get("n_threads", c.n_threads);
  r.finish();
}

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "64-bit size_t expected");

inline json to_json(const TreeConfig& c) {
  return {{"n_trees", c.n_trees}, {"max_depth", c.max_depth}, {"min_leaf", c.min_leaf}, {"mtry", c.mtry},
          {"n_threads", c.n_threads}};
}

inline void bind(JsonReader r, AugmentConfig& a) {
  r.get("p_rotate", a.p_rotate);
  r.get("p_hflip", a.p_hflip);
  r.get("p_vflip", a.p_vflip);
  r.get("p_jitter", a.p_jitter);
  r.get("jitter", a.jitter);
  r.get("p_noise", a.p_noise);
  r.get("noise_sigma", a.noise_sigma);
  r.finish();
}

inline json to_json(const AugmentConfig& a) {
  return {{"p_rotate", a.p_rotate}, {"p_hflip", a.p_hflip}, {"p_vflip", a.p_vflip}, {"p_jitter", a.p_jitter},
          {"jitter", a.jitter},     {"p_noise", a.p_noise}, {"noise_sigma", a.noise_sigma}};
}

inline void bind(JsonReader r, NeuralModelConfig& m) {
  r.get("image_side", m.image_side);
  r.get("tower_widths", m.tower_widths);
  r.get("freeze_blocks", m.freeze_blocks);
  r.get("hidden", m.hidden);
  r.get("dropout", m.dropout);
  r.get("symmetric", m.symmetric);
  auto& t = m.train;
  r.get("epochs", t.epochs);
  r.get("batch_size", t.batch_size);
  r.get("lr", t.lr);
  r.get("lr_min", t.lr_min);
  r.get("momentum", t.momentum);
  r.get("t0_epochs", t.t0_epochs);
  r.get("t_mult", t.t_mult);
  r.get("patience", t.patience);
  r.get("pairs_per_epoch", t.pairs_per_epoch);
  r.get("val_monitor_pairs", t.val_monitor_pairs);
  r.get("augment", t.augment);
  bind(r.child("augmentation"), t.augmentation);
  r.finish();
}

inline json to_json(const NeuralModelConfig& m) {
  const auto& t = m.train;
  return {{"image_side", m.image_side},
          {"tower_widths", m.tower_widths},
          {"freeze_blocks", m.freeze_blocks},
          {"hidden", m.hidden},
          {"dropout", m.dropout},
          {"symmetric", m.symmetric},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"lr", t.lr},
          {"lr_min", t.lr_min},
          {"momentum", t.momentum},
          {"t0_epochs", t.t0_epochs},
          {"t_mult", t.t_mult},
          {"patience", t.patience},
          {"pairs_per_epoch", t.pairs_per_epoch},
          {"val_monitor_pairs", t.val_monitor_pairs},
          {"augment", t.augment},
          {"augmentation", to_json(t.augmentation)}};
}

}  // namespace detail

inline RunConfig config_from_json(const json& j) {
  using detail::bind;
  RunConfig c;
  detail::JsonReader r(j, "");
  r.get("output_root", c.output_root);
  r.get("seed", c.seed);
  {
    auto d = r.child("data");
    d.get("parcels_csv", c.parcels_csv);
    d.finish();
  }
  {
    auto t = r.child("tiles");
    t.get("source", c.tile_source);
    t.get("dir", c.tiles_dir);
    t.get("kinds", c.tile_kinds);
    t.finish();
  }
  {
    auto w = r.child("world");
    auto& wc = c.world;
    w.get("n_parcels", wc.n_parcels);
    w.get("n_provinces", wc.n_provinces);
    w.get("province_weight_decay", wc.province_weight_decay);
    w.get("density_per_km2", wc.density_per_km2);
    w.get("base_price", wc.base_price);
    w.get("base_spread", wc.base_spread);
    w.get("correlation_km", wc.correlation_km);
    w.get("bumps_per_province", wc.bumps_per_province);
    w.get("field_sd", wc.field_sd);
    w.get("attribute_scale", wc.attribute_scale);
    w.get("condition_sd", wc.condition_sd);
    w.get("noise_level", wc.noise_level);
    w.get("tile_coupling", wc.tile_coupling);
    w.get("tile_noise", wc.tile_noise);
    w.get("tile_side", wc.tile_side);
    std::string start = wc.start_date.str();
    w.get("start_date", start);
    try {
      wc.start_date = Date::parse(start);
    } catch (const Error&) {
      throw ConfigError("config field 'world.start_date': expected YYYY-MM-DD");
    }
    w.get("date_span_days", wc.date_span_days);
    w.finish();
  }
  {
    auto s = r.child("split");
    s.get("train", c.split.train);
    s.get("val", c.split.val);
    s.get("test", c.split.test);
    s.finish();
  }
  {
    auto p = r.child("pairs");
    p.get("radius_km", c.pairs.radius_km);
    p.get("tau", c.pairs.tau);
    p.get("max_neighbors", c.pairs.max_neighbors);
    p.get("n_keep", c.n_keep);
    bind(p.child("selection_trees"), c.selection_trees);
    p.finish();
  }
  bind(r.child("trees"), c.trees);
  {
    auto g = r.child("gbt");
    g.get("n_rounds", c.gbt.n_rounds);
    g.get("learning_rate", c.gbt.learning_rate);
    g.get("max_depth", c.gbt.max_depth);
    g.get("min_leaf", c.gbt.min_leaf);
    g.finish();
  }
  {
    auto n = r.child("neural");
    bind(n.child("dl_small"), c.dl_small);
    bind(n.child("dl_large"), c.dl_large);
    n.finish();
  }
  {
    auto e = r.child("ensemble");
    e.get("n_trials", c.ensemble_trials);
    e.finish();
  }
  {
    auto e = r.child("evaluation");
    e.get("theta_points", c.eval.theta_points);
    e.get("coverage_basis", c.eval.coverage_basis);
    e.get("target_split", c.eval.target_split);
    e.get("headline_mape", c.eval.headline_mape);
    e.get("min_coverage", c.eval.min_coverage);
    e.get("theta", c.eval.theta);
    e.finish();
  }
  {
    auto f = r.child("fetch");
    auto& fc = c.fetch;
    f.get("zoom", fc.zoom);
    f.get("side", fc.side);
    f.get("rate_limit", fc.rate_limit);
    f.get("cache_dir", fc.cache_dir);
    f.get("url_template", fc.url_template);
    f.get("satellite_maptype", fc.satellite_maptype);
    f.get("segmented_maptype", fc.segmented_maptype);
    f.get("max_retries", fc.max_retries);
    int backoff = int(fc.backoff_base.count());
    f.get("backoff_ms", backoff);
    fc.backoff_base = std::chrono::milliseconds(backoff);
    f.finish();
  }
  r.finish();
  c.validate();
  return c;
}

/// Canonical JSON of a bound configuration (every field, defaults included).
inline json config_to_json(const RunConfig& c) {
  using detail::to_json;
  const auto& w = c.world;
  return {
      {"output_root", c.output_root.string()},
      {"seed", c.seed},
      {"data", {{"parcels_csv", c.parcels_csv.string()}}},
      {"tiles", {{"source", c.tile_source}, {"dir", c.tiles_dir.string()}, {"kinds", c.tile_kinds}}},
      {"world",
       {{"n_parcels", w.n_parcels},
        {"n_provinces", w.n_provinces},
        {"province_weight_decay", w.province_weight_decay},
        {"density_per_km2", w.density_per_km2},
        {"base_price", w.base_price},
        {"base_spread", w.base_spread},
        {"correlation_km", w.correlation_km},
        {"bumps_per_province", w.bumps_per_province},
        {"field_sd", w.field_sd},
        {"attribute_scale", w.attribute_scale},
        {"condition_sd", w.condition_sd},
        {"noise_level", w.noise_level},
        {"tile_coupling", w.tile_coupling},
        {"tile_noise", w.tile_noise},
        {"tile_side", w.tile_side},
        {"start_date", w.start_date.str()},
        {"date_span_days", w.date_span_days}}},
      {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
      {"pairs",
       {{"radius_km", c.pairs.radius_km},
        {"tau", c.pairs.tau},
        {"max_neighbors", c.pairs.max_neighbors},
        {"n_keep", c.n_keep},
        {"selection_trees", to_json(c.selection_trees)}}},
      {"trees", to_json(c.trees)},
      {"gbt",
       {{"n_rounds", c.gbt.n_rounds},
        {"learning_rate", c.gbt.learning_rate},
        {"max_depth", c.gbt.max_depth},
        {"min_leaf", c.gbt.min_leaf}}},
      {"neural", {{"dl_small", to_json(c.dl_small)}, {"dl_large", to_json(c.dl_large)}}},
      {"ensemble", {{"n_trials", c.ensemble_trials}}},
      {"evaluation",
       {{"theta_points", c.eval.theta_points},
        {"coverage_basis", c.eval.coverage_basis},
        {"target_split", c.eval.target_split},
        {"headline_mape", c.eval.headline_mape},
        {"min_coverage", c.eval.min_coverage},
        {"theta", c.eval.theta}}},
      {"fetch",
       {{"zoom", c.fetch.zoom},
        {"side", c.fetch.side},
        {"rate_limit", c.fetch.rate_limit},
        {"cache_dir", c.fetch.cache_dir.string()},
        {"url_template", c.fetch.url_template},
        {"satellite_maptype", c.fetch.satellite_maptype},
        {"segmented_maptype", c.fetch.segmented_maptype},
        {"max_retries", c.fetch.max_retries},
        {"backoff_ms", c.fetch.backoff_base.count()}}},
  };
}

/// Parses config text, reporting the line of any syntax error.
inline json parse_config_text(std::string_view text, const std::string& origin = "config") {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + long(upto), '\n');
    throw ConfigError(origin + ": parse error at line " + std::to_string(line) + ": " + e.what());
  }
}

/// Applies a `dotted.key=value` override; the value is read as JSON when it
/// parses as JSON and as a plain string otherwise.
inline void apply_override(json& j, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw ConfigError("override '" + std::string(assignment) + "' must look like key=value");
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

inline RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                                 std::optional<std::uint64_t> seed) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  json j = parse_config_text(read_text_file(path), path.string());
  for (const auto& o : overrides) apply_override(j, o);
  if (seed) j["seed"] = *seed;
  return config_from_json(j);
}

/// `<output_root>/run-<hash>-s<seed>`; the hash covers every setting except the output root.
inline std::filesystem::path run_directory(const RunConfig& c) {
  json j = config_to_json(c);
  j.erase("output_root");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return c.output_root / ("run-" + std::string(buf) + "-s" + std::to_string(c.seed));
}

}  // namespace landval
