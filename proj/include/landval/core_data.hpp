#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "landval/common.hpp"

namespace landval {

/// One appraised land. Attribute values are positional; names live in the
/// owning Dataset's AttributeSchema.
struct LandParcel {
  std::string id;
  double lat = 0.0;
  double lon = 0.0;
  double price = 0.0;  // THB per square wa
  Date appraisal_date;
  std::string province;
  std::vector<double> continuous;
  std::vector<std::string> categorical;

  friend bool operator==(const LandParcel&, const LandParcel&) = default;
};

struct AttributeSchema {
  std::vector<std::string> continuous;   // ordered names
  std::vector<std::string> categorical;  // ordered names, without the cat_ prefix
  std::vector<std::vector<std::string>> vocabularies;  // sorted, one per categorical
  std::vector<std::string> provinces;                  // sorted

  /// Index into vocabularies[attr], or -1 when the value is unseen.
  [[nodiscard]] int category_index(std::size_t attr, std::string_view value) const {
    const auto& v = vocabularies.at(attr);
    auto it = std::lower_bound(v.begin(), v.end(), value);
    return (it != v.end() && *it == value) ? int(it - v.begin()) : -1;
  }

  [[nodiscard]] int province_index(std::string_view value) const {
    auto it = std::lower_bound(provinces.begin(), provinces.end(), value);
    return (it != provinces.end() && *it == value) ? int(it - provinces.begin()) : -1;
  }

  friend bool operator==(const AttributeSchema&, const AttributeSchema&) = default;
};

inline void validate_parcel(const LandParcel& p, std::size_t n_cont, std::size_t n_cat,
                            std::size_t line = 0) {
  if (p.id.empty()) throw DataError("empty parcel id", line);
  if (!(p.price > 0.0) || !std::isfinite(p.price))
    throw DataError("parcel '" + p.id + "': price must be > 0", line);
  if (!(p.lat >= -90.0 && p.lat <= 90.0))
    throw DataError("parcel '" + p.id + "': latitude out of range", line);
  if (!(p.lon >= -180.0 && p.lon <= 180.0))
    throw DataError("parcel '" + p.id + "': longitude out of range", line);
  if (p.continuous.size() != n_cont || p.categorical.size() != n_cat)
    throw DataError("parcel '" + p.id + "': attribute count does not match schema", line);
  for (double v : p.continuous)
    if (!std::isfinite(v) || v < 0.0)
      throw DataError("parcel '" + p.id + "': continuous attributes must be finite and >= 0", line);
}

/// Immutable collection of parcels sharing one attribute schema.
class Dataset {
 public:
  Dataset() = default;

  /// Validates every parcel and builds the category vocabularies from the
  /// observed values.
  Dataset(std::vector<LandParcel> parcels, std::vector<std::string> continuous_names,
          std::vector<std::string> categorical_names)
      : parcels_(std::move(parcels)) {
    schema_.continuous = std::move(continuous_names);
    schema_.categorical = std::move(categorical_names);
    std::vector<std::set<std::string>> vocab(schema_.categorical.size());
    std::set<std::string> provinces;
    for (std::size_t i = 0; i < parcels_.size(); ++i) {
      const auto& p = parcels_[i];
      validate_parcel(p, schema_.continuous.size(), schema_.categorical.size());
      if (!by_id_.emplace(p.id, i).second) throw DataError("duplicate parcel id '" + p.id + "'");
      for (std::size_t c = 0; c < p.categorical.size(); ++c) vocab[c].insert(p.categorical[c]);
      provinces.insert(p.province);
    }
    for (auto& s : vocab) schema_.vocabularies.emplace_back(s.begin(), s.end());
    schema_.provinces.assign(provinces.begin(), provinces.end());
  }

  [[nodiscard]] const std::vector<LandParcel>& parcels() const { return parcels_; }
  [[nodiscard]] const AttributeSchema& schema() const { return schema_; }
  [[nodiscard]] std::size_t size() const { return parcels_.size(); }
  [[nodiscard]] bool empty() const { return parcels_.empty(); }
  [[nodiscard]] const LandParcel& operator[](std::size_t i) const { return parcels_[i]; }

  [[nodiscard]] std::optional<std::size_t> find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
  }

  [[nodiscard]] std::size_t index_of(std::string_view id) const {
    auto i = find(id);
    if (!i) throw DataError("unknown parcel id '" + std::string(id) + "'");
    return *i;
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.parcels_ == b.parcels_ && a.schema_ == b.schema_;
  }

 private:
  std::vector<LandParcel> parcels_;
  AttributeSchema schema_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

inline constexpr std::string_view kCategoricalPrefix = "cat_";
inline constexpr std::array<std::string_view, 6> kFixedParcelColumns = {
    "id", "lat", "lon", "price", "appraisal_date", "province"};

/// Parses a parcel CSV. Columns after the six fixed ones are continuous
/// attributes unless prefixed with `cat_`.
inline Dataset load_parcels(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  if (lines.empty()) throw DataError("missing header row in " + path.string());
  auto header = split_csv_line(lines[0]);
  for (std::size_t i = 0; i < kFixedParcelColumns.size(); ++i) {
    if (i >= header.size() || header[i] != kFixedParcelColumns[i])
      throw DataError("missing column '" + std::string(kFixedParcelColumns[i]) + "' at position " +
                          std::to_string(i + 1),
                      1);
  }
  std::vector<std::string> cont_names, cat_names;
  std::vector<std::pair<bool, std::size_t>> column_slot;  // (is_categorical, slot)
  std::set<std::string> seen;
  for (std::size_t i = kFixedParcelColumns.size(); i < header.size(); ++i) {
    std::string name(header[i]);
    if (name.empty()) throw DataError("empty column name at position " + std::to_string(i + 1), 1);
    if (!seen.insert(name).second) throw DataError("duplicate column '" + name + "'", 1);
    if (name.rfind(kCategoricalPrefix, 0) == 0) {
      column_slot.emplace_back(true, cat_names.size());
      cat_names.push_back(name.substr(kCategoricalPrefix.size()));
    } else {
      column_slot.emplace_back(false, cont_names.size());
      cont_names.push_back(name);
    }
  }

  std::vector<LandParcel> parcels;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::size_t line_no = ln + 1;
    if (lines[ln].empty()) continue;
    auto f = split_csv_line(lines[ln]);
    if (f.size() != header.size())
      throw DataError("expected " + std::to_string(header.size()) + " fields, found " +
                          std::to_string(f.size()),
                      line_no);
    auto num = [&](std::size_t col) {
      double v;
      if (!parse_double(f[col], v))
        throw DataError("unparsable number '" + std::string(f[col]) + "' in column '" +
                            std::string(header[col]) + "'",
                        line_no);
      return v;
    };
    LandParcel p;
    p.id = std::string(f[0]);
    p.lat = num(1);
    p.lon = num(2);
    p.price = num(3);
    try {
      p.appraisal_date = Date::parse(f[4]);
    } catch (const DataError& e) {
      throw DataError(e.what(), line_no);
    }
    p.province = std::string(f[5]);
    p.continuous.resize(cont_names.size());
    p.categorical.resize(cat_names.size());
    for (std::size_t i = 0; i < column_slot.size(); ++i) {
      auto [is_cat, slot] = column_slot[i];
      const std::size_t col = i + kFixedParcelColumns.size();
      if (is_cat)
        p.categorical[slot] = std::string(f[col]);
      else
        p.continuous[slot] = num(col);
    }
    validate_parcel(p, cont_names.size(), cat_names.size(), line_no);
    parcels.push_back(std::move(p));
  }
  try {
    return Dataset(std::move(parcels), std::move(cont_names), std::move(cat_names));
  } catch (const DataError& e) {
    throw DataError(std::string(e.what()) + " in " + path.string());
  }
}

inline std::string parcels_to_csv(const Dataset& ds) {
  std::string out;
  for (std::size_t i = 0; i < kFixedParcelColumns.size(); ++i) {
    if (i) out += ',';
    out += kFixedParcelColumns[i];
  }
  for (const auto& n : ds.schema().continuous) out += "," + n;
  for (const auto& n : ds.schema().categorical) out += "," + std::string(kCategoricalPrefix) + n;
  out += '\n';
  for (const auto& p : ds.parcels()) {
    check_csv_field(p.id);
    check_csv_field(p.province);
    out += p.id + ',' + format_double(p.lat) + ',' + format_double(p.lon) + ',' +
           format_double(p.price) + ',' + p.appraisal_date.str() + ',' + p.province;
    for (double v : p.continuous) out += ',' + format_double(v);
    for (const auto& c : p.categorical) {
      check_csv_field(c);
      out += ',' + c;
    }
    out += '\n';
  }
  return out;
}

inline void write_parcels(const Dataset& ds, const std::filesystem::path& path) {
  write_text_file(path, parcels_to_csv(ds));
}

// ---------------------------------------------------------------------------
// Temporal split
// ---------------------------------------------------------------------------

enum class Split : std::uint8_t { train, val, test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw DataError("unknown split '" + std::string(s) + "'");
}

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;

  void validate() const {
    if (train < 0 || val < 0 || test < 0 || std::abs(train + val + test - 1.0) > 1e-9)
      throw ConfigError("split ratios must be non-negative and sum to 1");
  }
};

/// Split label per parcel, aligned with Dataset indices.
class SplitAssignment {
 public:
  SplitAssignment() = default;
  explicit SplitAssignment(std::vector<Split> by_index) : by_index_(std::move(by_index)) {}

  [[nodiscard]] Split operator[](std::size_t parcel_index) const { return by_index_.at(parcel_index); }
  [[nodiscard]] std::size_t size() const { return by_index_.size(); }
  [[nodiscard]] const std::vector<Split>& labels() const { return by_index_; }
  [[nodiscard]] std::size_t count(Split s) const {
    return std::size_t(std::count(by_index_.begin(), by_index_.end(), s));
  }

  friend bool operator==(const SplitAssignment&, const SplitAssignment&) = default;

 private:
  std::vector<Split> by_index_;
};

inline constexpr std::size_t kMinParcelsPerProvince = 10;

/// Per province: the earliest `train` share by (date, id) goes to train; the
/// rest is shuffled with a seeded RNG and divided between val and test.
inline SplitAssignment temporal_split(const Dataset& ds, SplitRatios ratios, std::uint64_t seed) {
  ratios.validate();

  std::map<std::string, std::vector<std::size_t>> by_province;
  for (std::size_t i = 0; i < ds.size(); ++i) by_province[ds[i].province].push_back(i);

  std::vector<Split> out(ds.size(), Split::train);
  std::uint64_t stream = 0;
  for (auto& [province, idx] : by_province) {
    if (idx.size() < kMinParcelsPerProvince)
      throw DataError("province '" + province + "' has " + std::to_string(idx.size()) +
                      " parcels; at least " + std::to_string(kMinParcelsPerProvince) +
                      " are required for a split");
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const auto& pa = ds[a];
      const auto& pb = ds[b];
      if (pa.appraisal_date != pb.appraisal_date) return pa.appraisal_date < pb.appraisal_date;
      return pa.id < pb.id;
    });
    const auto n = idx.size();
    const auto n_train = std::min<std::size_t>(n, std::size_t(std::llround(ratios.train * double(n))));
    const auto held = n - n_train;
    const double held_share = ratios.val + ratios.test;
    const auto n_val =
        held_share > 0 ? std::min<std::size_t>(held, std::size_t(std::llround(double(held) * ratios.val / held_share)))
                       : 0;
    std::vector<std::size_t> rest(idx.begin() + std::ptrdiff_t(n_train), idx.end());
    std::mt19937_64 rng(mix_seed(seed, stream++));
    std::shuffle(rest.begin(), rest.end(), rng);
    for (std::size_t k = 0; k < rest.size(); ++k) out[rest[k]] = k < n_val ? Split::val : Split::test;
  }
  return SplitAssignment(std::move(out));
}

inline std::string split_to_csv(const Dataset& ds, const SplitAssignment& split) {
  std::string out = "parcel_id,split\n";
  for (std::size_t i = 0; i < ds.size(); ++i)
    out += ds[i].id + ',' + std::string(to_string(split[i])) + '\n';
  return out;
}

inline SplitAssignment load_split(const std::filesystem::path& path, const Dataset& ds) {
  auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "parcel_id,split") throw DataError("bad split header in " + path.string(), 1);
  std::vector<Split> by_index(ds.size(), Split::train);
  std::vector<bool> seen(ds.size(), false);
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    auto f = split_csv_line(lines[ln]);
    if (f.size() != 2) throw DataError("expected 2 fields", ln + 1);
    auto i = ds.find(f[0]);
    if (!i) throw DataError("unknown parcel id '" + std::string(f[0]) + "'", ln + 1);
    by_index[*i] = parse_split(f[1]);
    seen[*i] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    throw DataError("split file " + path.string() + " does not cover every parcel");
  return SplitAssignment(std::move(by_index));
}

}  // namespace landval
