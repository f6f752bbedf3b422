#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <unordered_map>
#include <vector>

#include "landval/core_data.hpp"

namespace landval {

inline constexpr double kEarthRadiusKm = 6371.0088;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

/// Great-circle distance on a sphere of mean Earth radius. Symmetric to the
/// last bit: every term is invariant under swapping the endpoints.
inline double haversine_km(LatLon a, LatLon b) {
  const double dlat = deg2rad(std::abs(b.lat - a.lat));
  const double dlon = deg2rad(std::abs(b.lon - a.lon));
  const double s1 = std::sin(dlat / 2);
  const double s2 = std::sin(dlon / 2);
  const double h = s1 * s1 + std::cos(deg2rad(a.lat)) * std::cos(deg2rad(b.lat)) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

inline LatLon location(const LandParcel& p) { return {p.lat, p.lon}; }

struct Neighbor {
  std::size_t index;  // into the indexed Dataset
  double distance_km;
};

/// Uniform lat/lon bucket grid over a Dataset. Cells are square in degrees,
/// one radius of latitude on a side; longitude spans are widened per query to
/// cover the circle at the query latitude.
class SpatialIndex {
 public:
  SpatialIndex(const Dataset& ds, double cell_radius_km) : ds_(&ds) {
    if (!(cell_radius_km > 0)) throw ConfigError("spatial index cell radius must be > 0");
    cell_deg_ = cell_radius_km / kEarthRadiusKm * 180.0 / std::numbers::pi;
    n_lon_cells_ = std::max<std::int64_t>(1, std::int64_t(std::ceil(360.0 / cell_deg_)));
    for (std::size_t i = 0; i < ds.size(); ++i) cells_[key(row(ds[i].lat), col(ds[i].lon))].push_back(i);
  }

  [[nodiscard]] const Dataset& dataset() const { return *ds_; }

  /// Every indexed parcel (other than `exclude_id`) within radius_km of
  /// `center`, ascending by (distance, id).
  [[nodiscard]] std::vector<Neighbor> neighbors_within(LatLon center, double radius_km,
                                                       std::string_view exclude_id = {}) const {
    std::vector<Neighbor> out;
    if (!(radius_km > 0)) return out;
    const double dlat = radius_km / kEarthRadiusKm * 180.0 / std::numbers::pi;
    const double lat_lo = center.lat - dlat, lat_hi = center.lat + dlat;
    bool all_lon = lat_lo <= -89.0 || lat_hi >= 89.0;
    double dlon = 0.0;
    if (!all_lon) {
      const double worst = std::max(std::abs(lat_lo), std::abs(lat_hi));
      dlon = dlat / std::cos(deg2rad(worst)) * 1.01;
      all_lon = dlon >= 180.0;
    }
    const auto r0 = row(lat_lo) - 1, r1 = row(lat_hi) + 1;
    auto visit = [&](std::int64_t r, std::int64_t c) {
      auto it = cells_.find(key(r, c));
      if (it == cells_.end()) return;
      for (auto i : it->second) {
        const auto& p = (*ds_)[i];
        if (!exclude_id.empty() && p.id == exclude_id) continue;
        const double d = haversine_km(center, location(p));
        if (d <= radius_km) out.push_back({i, d});
      }
    };
    for (auto r = r0; r <= r1; ++r) {
      if (all_lon) {
        for (std::int64_t c = 0; c < n_lon_cells_; ++c) visit(r, c);
        continue;
      }
      const auto c0 = raw_col(center.lon - dlon) - 1, c1 = raw_col(center.lon + dlon) + 1;
      if (c1 - c0 + 1 >= n_lon_cells_) {
        for (std::int64_t c = 0; c < n_lon_cells_; ++c) visit(r, c);
      } else {
        for (auto c = c0; c <= c1; ++c) visit(r, wrap(c));
      }
    }
    sort_neighbors(out);
    return out;
  }

  [[nodiscard]] std::vector<Neighbor> neighbors_within(const LandParcel& p, double radius_km) const {
    return neighbors_within(location(p), radius_km, p.id);
  }

  void sort_neighbors(std::vector<Neighbor>& v) const {
    std::sort(v.begin(), v.end(), [&](const Neighbor& a, const Neighbor& b) {
      if (a.distance_km != b.distance_km) return a.distance_km < b.distance_km;
      return (*ds_)[a.index].id < (*ds_)[b.index].id;
    });
  }

 private:
  [[nodiscard]] std::int64_t row(double lat) const { return std::int64_t(std::floor(lat / cell_deg_)); }
  [[nodiscard]] std::int64_t raw_col(double lon) const {
    return std::int64_t(std::floor((lon + 180.0) / cell_deg_));
  }
  [[nodiscard]] std::int64_t wrap(std::int64_t c) const {
    c %= n_lon_cells_;
    return c < 0 ? c + n_lon_cells_ : c;
  }
  [[nodiscard]] std::int64_t col(double lon) const { return wrap(raw_col(lon)); }
  static std::uint64_t key(std::int64_t r, std::int64_t c) {
    return (std::uint64_t(r + (1LL << 31)) << 32) ^ std::uint64_t(c);
  }

  const Dataset* ds_;
  double cell_deg_ = 0.0;
  std::int64_t n_lon_cells_ = 1;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

}  // namespace landval
