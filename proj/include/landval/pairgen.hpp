#pragma once

#include <json.hpp>

#include <array>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "landval/core_data.hpp"
#include "landval/geoindex.hpp"
#include "landval/imagery.hpp"
#include "landval/matrix.hpp"
#include "landval/tile_store.hpp"
#include "landval/trees.hpp"

namespace landval {

// ---------------------------------------------------------------------------
// Feature schema
// ---------------------------------------------------------------------------

enum class FeatureKind : std::uint8_t { cont_diff, cat_same, color_diff, distance };

inline std::string_view to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::cont_diff: return "cont_diff";
    case FeatureKind::cat_same: return "cat_same";
    case FeatureKind::color_diff: return "color_diff";
    case FeatureKind::distance: return "distance";
  }
  return "?";
}

inline FeatureKind parse_feature_kind(std::string_view s) {
  for (auto k : {FeatureKind::cont_diff, FeatureKind::cat_same, FeatureKind::color_diff, FeatureKind::distance})
    if (to_string(k) == s) return k;
  throw DataError("unknown feature kind '" + std::string(s) + "'");
}

struct FeatureSpec {
  std::string name;
  FeatureKind kind;
  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

/// Ordered pair-feature layout: |continuous diffs|, categorical same-flags,
/// per-kind color diffs plus an `img_missing` sentinel, then distance.
struct FeatureSchema {
  std::vector<FeatureSpec> features;
  std::vector<bool> selected;  // mask over `features`
  std::size_t n_continuous = 0;
  std::size_t n_categorical = 0;
  std::vector<TileKind> tile_kinds;

  [[nodiscard]] std::size_t size() const { return features.size(); }

  [[nodiscard]] std::vector<std::size_t> selected_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < features.size(); ++i)
      if (selected[i]) out.push_back(i);
    return out;
  }

  [[nodiscard]] std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& f : features) out.push_back(f.name);
    return out;
  }

  /// Same layout with image-derived columns removed from the selection.
  [[nodiscard]] FeatureSchema without_image_features() const {
    FeatureSchema s = *this;
    for (std::size_t i = 0; i < features.size(); ++i)
      if (features[i].kind == FeatureKind::color_diff) s.selected[i] = false;
    return s;
  }

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j;
    j["features"] = nlohmann::json::array();
    for (std::size_t i = 0; i < features.size(); ++i)
      j["features"].push_back(
          {{"name", features[i].name}, {"kind", std::string(to_string(features[i].kind))}, {"selected", bool(selected[i])}});
    j["n_continuous"] = n_continuous;
    j["n_categorical"] = n_categorical;
    std::vector<std::string> kinds;
    for (auto k : tile_kinds) kinds.emplace_back(to_string(k));
    j["tile_kinds"] = kinds;
    return j;
  }

  static FeatureSchema from_json(const nlohmann::json& j) {
    FeatureSchema s;
    for (const auto& f : j.at("features")) {
      s.features.push_back({f.at("name").get<std::string>(), parse_feature_kind(f.at("kind").get<std::string>())});
      s.selected.push_back(f.at("selected").get<bool>());
    }
    s.n_continuous = j.at("n_continuous").get<std::size_t>();
    s.n_categorical = j.at("n_categorical").get<std::size_t>();
    for (const auto& k : j.at("tile_kinds")) s.tile_kinds.push_back(parse_tile_kind(k.get<std::string>()));
    return s;
  }

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

inline constexpr std::array<std::string_view, 3> kColorStatNames = {"greenness", "blueness", "darkness"};

inline FeatureSchema make_feature_schema(const AttributeSchema& attrs, std::span<const TileKind> kinds) {
  FeatureSchema s;
  for (const auto& n : attrs.continuous) s.features.push_back({"d_" + n, FeatureKind::cont_diff});
  for (const auto& n : attrs.categorical) s.features.push_back({"same_" + n, FeatureKind::cat_same});
  for (auto k : kinds)
    for (auto stat : kColorStatNames)
      s.features.push_back({"color_" + std::string(to_string(k)) + "_" + std::string(stat), FeatureKind::color_diff});
  if (!kinds.empty()) s.features.push_back({"img_missing", FeatureKind::color_diff});
  s.features.push_back({"distance_km", FeatureKind::distance});
  s.selected.assign(s.features.size(), true);
  s.n_continuous = attrs.continuous.size();
  s.n_categorical = attrs.categorical.size();
  s.tile_kinds.assign(kinds.begin(), kinds.end());
  return s;
}

// ---------------------------------------------------------------------------
// Labels and differenced features
// ---------------------------------------------------------------------------

/// 1 iff the neighbor's price is within a relative `tau` of the primary's.
inline int label_pair(const LandParcel& primary, const LandParcel& neighbor, double tau) {
  if (!(tau > 0)) throw ConfigError("tau must be > 0");
  return std::abs(primary.price - neighbor.price) / primary.price <= tau ? 1 : 0;
}

/// Color statistics per tile kind for one parcel; absent when no tile exists.
struct ParcelImagery {
  std::array<std::optional<ColorStats>, kAllTileKinds.size()> by_kind;

  [[nodiscard]] const std::optional<ColorStats>& get(TileKind k) const { return by_kind[std::size_t(k)]; }
};

inline std::vector<ParcelImagery> compute_parcel_imagery(const Dataset& ds, const TileStore& store,
                                                         std::span<const TileKind> kinds) {
  std::vector<ParcelImagery> out(ds.size());
  detail::parallel_for_index(ds.size(), 0, [&](std::size_t i) {
    for (auto k : kinds)
      if (auto t = store.load(k, ds[i].id)) out[i].by_kind[std::size_t(k)] = color_stats(*t);
  });
  return out;
}

inline std::vector<double> diff_features(const LandParcel& p, const LandParcel& q, const ParcelImagery& ip,
                                         const ParcelImagery& iq, double distance_km, const FeatureSchema& schema) {
  if (p.continuous.size() != schema.n_continuous || q.continuous.size() != schema.n_continuous ||
      p.categorical.size() != schema.n_categorical || q.categorical.size() != schema.n_categorical)
    throw ShapeError("diff_features: parcel attributes do not match the feature schema");
  std::vector<double> f;
  f.reserve(schema.size());
  for (std::size_t i = 0; i < schema.n_continuous; ++i) f.push_back(std::abs(p.continuous[i] - q.continuous[i]));
  for (std::size_t i = 0; i < schema.n_categorical; ++i) f.push_back(p.categorical[i] == q.categorical[i] ? 1.0 : 0.0);
  bool missing = false;
  for (auto k : schema.tile_kinds) {
    const auto& a = ip.get(k);
    const auto& b = iq.get(k);
    if (a && b) {
      for (double d : color_diff(*a, *b)) f.push_back(d);
    } else {
      missing = true;
      f.insert(f.end(), 3, 0.0);
    }
  }
  if (!schema.tile_kinds.empty()) f.push_back(missing ? 1.0 : 0.0);
  f.push_back(distance_km);
  return f;
}

// ---------------------------------------------------------------------------
// Pair construction
// ---------------------------------------------------------------------------

struct PairConfig {
  double radius_km = 3.0;
  double tau = 0.20;
  int max_neighbors = 30;

  void validate() const {
    if (!(radius_km > 0)) throw ConfigError("pairs.radius_km must be > 0");
    if (!(tau > 0)) throw ConfigError("pairs.tau must be > 0");
    if (max_neighbors < 1) throw ConfigError("pairs.max_neighbors must be >= 1");
  }
};

struct PairRecord {
  std::size_t primary = 0;   // Dataset index
  std::size_t neighbor = 0;  // Dataset index
  double distance_km = 0.0;
  std::vector<double> features;  // full FeatureSchema width
  int label = 0;
  Split split = Split::train;  // the primary's split

  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

/// One record per (primary, neighbor) within the radius, nearest first and
/// capped at max_neighbors. Neighbors are always train-split parcels: their
/// appraisals are the only prices a valuation may draw on.
inline std::vector<PairRecord> build_pairs(const Dataset& ds, const SpatialIndex& index, const SplitAssignment& split,
                                           const std::vector<ParcelImagery>& imagery, const FeatureSchema& schema,
                                           const PairConfig& cfg) {
  cfg.validate();
  if (&index.dataset() != &ds) throw ConfigError("build_pairs: spatial index was built over a different dataset");
  if (split.size() != ds.size() || imagery.size() != ds.size())
    throw ShapeError("build_pairs: split/imagery size does not match dataset");

  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ds[a].id < ds[b].id; });

  std::vector<std::vector<PairRecord>> per_primary(ds.size());
  detail::parallel_for_index(order.size(), 0, [&](std::size_t k) {
    const auto i = order[k];
    const auto& p = ds[i];
    auto& out = per_primary[k];
    for (const auto& nb : index.neighbors_within(p, cfg.radius_km)) {
      if (split[nb.index] != Split::train) continue;
      if (out.size() >= std::size_t(cfg.max_neighbors)) break;
      const auto& q = ds[nb.index];
      out.push_back({i, nb.index, nb.distance_km,
                     diff_features(p, q, imagery[i], imagery[nb.index], nb.distance_km, schema),
                     label_pair(p, q, cfg.tau), split[i]});
    }
  });
  std::vector<PairRecord> pairs;
  for (auto& v : per_primary)
    for (auto& r : v) pairs.push_back(std::move(r));
  return pairs;
}

inline std::string pairs_to_csv(const Dataset& ds, const std::vector<PairRecord>& pairs, const FeatureSchema& schema) {
  std::string out = "primary_id,neighbor_id,distance_km,label,split";
  for (const auto& f : schema.features) out += "," + f.name;
  out += '\n';
  for (const auto& r : pairs) {
    out += ds[r.primary].id + ',' + ds[r.neighbor].id + ',' + format_double(r.distance_km) + ',' +
           std::to_string(r.label) + ',' + std::string(to_string(r.split));
    for (double v : r.features) out += ',' + format_double(v);
    out += '\n';
  }
  return out;
}

inline std::vector<PairRecord> load_pairs(const std::filesystem::path& path, const Dataset& ds,
                                          const FeatureSchema& schema) {
  auto lines = read_lines(path);
  if (lines.empty()) throw DataError("missing header in " + path.string());
  auto header = split_csv_line(lines[0]);
  const std::size_t fixed = 5;
  if (header.size() != fixed + schema.size()) throw DataError("pair file columns do not match the feature schema", 1);
  for (std::size_t i = 0; i < schema.size(); ++i)
    if (header[fixed + i] != schema.features[i].name)
      throw DataError("pair column '" + std::string(header[fixed + i]) + "' does not match schema feature '" +
                          schema.features[i].name + "'",
                      1);
  std::vector<PairRecord> pairs;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    auto f = split_csv_line(lines[ln]);
    if (f.size() != header.size()) throw DataError("wrong field count", ln + 1);
    PairRecord r;
    auto pi = ds.find(f[0]), ni = ds.find(f[1]);
    if (!pi || !ni) throw DataError("pair references an unknown parcel", ln + 1);
    r.primary = *pi;
    r.neighbor = *ni;
    if (!parse_double(f[2], r.distance_km)) throw DataError("bad distance", ln + 1);
    if (f[3] != "0" && f[3] != "1") throw DataError("bad label", ln + 1);
    r.label = f[3] == "1" ? 1 : 0;
    r.split = parse_split(f[4]);
    r.features.resize(schema.size());
    for (std::size_t i = 0; i < schema.size(); ++i)
      if (!parse_double(f[fixed + i], r.features[i])) throw DataError("bad feature value", ln + 1);
    pairs.push_back(std::move(r));
  }
  return pairs;
}

/// Rows = pairs (optionally filtered by split), columns = the given feature indices.
inline Matrix pair_matrix(const std::vector<PairRecord>& pairs, std::span<const std::size_t> columns) {
  Matrix X(pairs.size(), columns.size());
  for (std::size_t r = 0; r < pairs.size(); ++r)
    for (std::size_t c = 0; c < columns.size(); ++c) X(r, c) = pairs[r].features[columns[c]];
  return X;
}

inline std::vector<int> pair_labels(const std::vector<PairRecord>& pairs) {
  std::vector<int> y;
  y.reserve(pairs.size());
  for (const auto& p : pairs) y.push_back(p.label);
  return y;
}

inline std::vector<PairRecord> filter_split(const std::vector<PairRecord>& pairs, Split s) {
  std::vector<PairRecord> out;
  for (const auto& p : pairs)
    if (p.split == s) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------
// Feature selection
// ---------------------------------------------------------------------------

struct FeatureSelection {
  std::vector<bool> mask;
  std::vector<double> importance;  // averaged normalized importance per feature
};

/// Averages Random Forest and Extra Trees importances over all features and
/// keeps the top `n_keep` (ties broken by column order).
inline FeatureSelection select_features(const Matrix& X, std::span<const int> y, std::size_t n_keep,
                                        TreeConfig cfg) {
  check_binary_labels(y);
  n_keep = std::min(n_keep, X.cols);
  FeatureSelection sel;
  cfg.seed = mix_seed(cfg.seed, 0);
  const auto rf = fit_ensemble(EnsembleKind::random_forest, X, y, cfg);
  cfg.seed = mix_seed(cfg.seed, 1);
  const auto et = fit_ensemble(EnsembleKind::extra_trees, X, y, cfg);
  sel.importance.resize(X.cols);
  for (std::size_t f = 0; f < X.cols; ++f) sel.importance[f] = 0.5 * (rf.importances()[f] + et.importances()[f]);
  std::vector<std::size_t> order(X.cols);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sel.importance[a] > sel.importance[b]; });
  sel.mask.assign(X.cols, false);
  for (std::size_t k = 0; k < n_keep; ++k) sel.mask[order[k]] = true;
  return sel;
}

}  // namespace landval
