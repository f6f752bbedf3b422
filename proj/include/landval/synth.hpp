#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "landval/core_data.hpp"
#include "landval/geoindex.hpp"
#include "landval/imagery.hpp"
#include "landval/tile_store.hpp"

namespace landval {

struct WorldConfig {
  std::size_t n_parcels = 2000;
  int n_provinces = 7;
  double province_weight_decay = 0.8;  // province k gets weight (k+1)^-decay
  double density_per_km2 = 1.8;        // parcel density at a province center
  double base_price = 40000.0;         // THB per square wa
  double base_spread = 0.35;           // log-sd of province base prices
  double correlation_km = 2.0;         // radial basis bump length scale
  int bumps_per_province = 16;
  double field_sd = 0.35;      // log-sd of bump amplitudes
  double attribute_scale = 1.25;  // multiplies the log-price effects of tabular attributes
  double condition_sd = 0.20;  // per-parcel latent visible only through tiles
  double noise_level = 0.05;   // mean |observed - truth| / truth
  double tile_coupling = 1.0;  // how strongly vegetation share tracks price
  double tile_noise = 0.03;    // sd of vegetation share around its price-driven level
  int tile_side = 64;
  Date start_date{2020, 1, 1};
  int date_span_days = 1096;
  std::uint64_t seed = 7;

  void validate() const {
    if (n_provinces < 1) throw ConfigError("world.n_provinces must be >= 1");
    if (!(density_per_km2 > 0)) throw ConfigError("world.density_per_km2 must be > 0");
    if (!(base_price > 0)) throw ConfigError("world.base_price must be > 0");
    if (!(correlation_km > 0)) throw ConfigError("world.correlation_km must be > 0");
    if (bumps_per_province < 0) throw ConfigError("world.bumps_per_province must be >= 0");
    for (double v : {attribute_scale, base_spread, field_sd, condition_sd, noise_level, tile_coupling, tile_noise})
      if (!(v >= 0)) throw ConfigError("world spread parameters must be >= 0");
    if (!is_supported_side(tile_side)) throw ConfigError("world.tile_side must be one of 64/128/256/512");
    if (date_span_days < 1) throw ConfigError("world.date_span_days must be >= 1");
  }
};

inline const std::vector<std::string> kSynthContinuous = {
    "road_width_m", "dist_main_street_m", "area_sq_wa", "frontage_m",
    "dist_transit_km", "elevation_m", "depth_m", "shape_index"};
inline const std::vector<std::string> kSynthCategorical = {"land_use", "street_id", "zoning", "title_deed"};

namespace detail {

struct Bump {
  double lat, lon, amplitude;
};

struct ProvinceLayout {
  std::string name;
  double lat, lon, sigma_km, log_base;
  std::size_t count;
  std::vector<Bump> bumps;
};

inline double km_to_lat(double km) { return km / (kEarthRadiusKm * std::numbers::pi / 180.0); }
inline double km_to_lon(double km, double lat) { return km_to_lat(km) / std::cos(deg2rad(lat)); }

inline std::vector<ProvinceLayout> province_layout(const WorldConfig& cfg) {
  std::vector<double> w(std::size_t(cfg.n_provinces));
  double total = 0;
  for (std::size_t k = 0; k < w.size(); ++k) total += (w[k] = std::pow(double(k + 1), -cfg.province_weight_decay));
  // largest-remainder allocation of parcel counts
  std::vector<std::size_t> count(w.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double exact = double(cfg.n_parcels) * w[k] / total;
    count[k] = std::size_t(exact);
    used += count[k];
    rem.emplace_back(-(exact - double(count[k])), k);
  }
  std::sort(rem.begin(), rem.end());
  for (std::size_t i = 0; used < cfg.n_parcels; ++i, ++used) ++count[rem[i % rem.size()].second];

  std::mt19937_64 rng(mix_seed(cfg.seed, 0xb0));
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<ProvinceLayout> out;
  for (std::size_t k = 0; k < w.size(); ++k) {
    ProvinceLayout p;
    char name[32];
    std::snprintf(name, sizeof name, "prov_%02zu", k + 1);
    p.name = name;
    p.lat = 12.5 + 0.6 * double(k);
    p.lon = 99.8 + 0.45 * double(k % 3);
    p.sigma_km = std::max(1.0, std::sqrt(double(count[k]) / (2 * std::numbers::pi * cfg.density_per_km2)));
    p.log_base = std::log(cfg.base_price) + cfg.base_spread * nd(rng);
    p.count = count[k];
    for (int b = 0; b < cfg.bumps_per_province; ++b) {
      const double r = 2.0 * p.sigma_km * std::sqrt(u01(rng));
      const double a = 2 * std::numbers::pi * u01(rng);
      p.bumps.push_back({p.lat + km_to_lat(r * std::sin(a)), p.lon + km_to_lon(r * std::cos(a), p.lat),
                         cfg.field_sd * nd(rng)});
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline double spatial_field(const ProvinceLayout& p, double lat, double lon, double length_km) {
  double f = 0;
  for (const auto& b : p.bumps) {
    const double d = haversine_km({lat, lon}, {b.lat, b.lon});
    f += b.amplitude * std::exp(-d * d / (2 * length_km * length_km));
  }
  return f;
}

inline double land_use_effect(std::string_view v) {
  if (v == "commercial") return 0.30;
  if (v == "agricultural") return -0.45;
  if (v == "industrial") return -0.15;
  return 0.0;
}

inline double zoning_effect(std::string_view v) { return v == "high" ? 0.10 : v == "low" ? -0.05 : 0.0; }

inline double title_effect(std::string_view v) {
  if (v == "ns3k") return -0.10;
  if (v == "ns3") return -0.25;
  return 0.0;
}

/// Log-price contribution of the tabular attributes.
inline double attribute_effect(const LandParcel& p, double scale) {
  const auto& c = p.continuous;
  return scale * (0.015 * (c[0] - 10.0) - 0.0002 * (c[1] - 400.0) - 0.08 * std::log(c[2] / 300.0) + 0.003 * (c[3] - 15.0) -
         0.03 * (c[4] - 4.0) + land_use_effect(p.categorical[0]) + zoning_effect(p.categorical[2]) +
         title_effect(p.categorical[3]));
}

/// Hidden per-parcel quality, a pure function of (seed, id).
inline double condition(const WorldConfig& cfg, std::string_view id) {
  std::mt19937_64 rng(mix_seed(cfg.seed ^ 0xc0d1, fnv1a(id)));
  return cfg.condition_sd * std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline std::size_t province_of(const std::vector<ProvinceLayout>& layout, std::string_view name) {
  for (std::size_t k = 0; k < layout.size(); ++k)
    if (layout[k].name == name) return k;
  throw DataError("parcel province '" + std::string(name) + "' is not part of this world");
}

inline double log_truth(const WorldConfig& cfg, const std::vector<ProvinceLayout>& layout, const LandParcel& p) {
  const auto& prov = layout[province_of(layout, p.province)];
  return prov.log_base + spatial_field(prov, p.lat, p.lon, cfg.correlation_km) + attribute_effect(p, cfg.attribute_scale) +
         condition(cfg, p.id);
}

// Land-cover classes used by the tile renderer.
enum : std::uint8_t { kVegetation, kBuilding, kRoad, kWater };

inline constexpr std::array<std::array<int, 3>, 4> kSatellitePalette = {
    {{40, 130, 45}, {178, 168, 158}, {88, 88, 92}, {35, 75, 150}}};
inline constexpr std::array<std::array<int, 3>, 4> kSegmentedPalette = {
    {{196, 228, 186}, {236, 234, 228}, {255, 255, 255}, {166, 198, 246}}};

/// Procedural land-cover map: a smooth value-noise field thresholded so the
/// vegetation share is close to `veg_share`, plus a road and sometimes water.
inline std::vector<std::uint8_t> cover_map(int side, double veg_share, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  constexpr int G = 9;
  std::array<double, G * G> grid{};
  for (auto& g : grid) g = u01(rng);
  std::vector<double> field(std::size_t(side) * side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double gy = double(y) / side * (G - 1), gx = double(x) / side * (G - 1);
      const int iy = int(gy), ix = int(gx);
      const double fy = gy - iy, fx = gx - ix;
      auto at = [&](int a, int b) { return grid[std::size_t(a * G + b)]; };
      field[std::size_t(y) * side + x] = (1 - fy) * ((1 - fx) * at(iy, ix) + fx * at(iy, ix + 1)) +
                                         fy * ((1 - fx) * at(iy + 1, ix) + fx * at(iy + 1, ix + 1));
    }
  std::vector<double> sorted = field;
  const std::size_t q = std::min(sorted.size() - 1, std::size_t(std::clamp(veg_share, 0.0, 1.0) * double(sorted.size())));
  std::nth_element(sorted.begin(), sorted.begin() + long(q), sorted.end());
  const double cut = veg_share <= 0 ? -1.0 : sorted[q];

  std::vector<std::uint8_t> cls(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) cls[i] = field[i] < cut ? kVegetation : kBuilding;

  const bool horizontal = u01(rng) < 0.5;
  const int road_at = int(side * (0.2 + 0.6 * u01(rng)));
  const int road_w = std::max(2, side / 20);
  const bool water = u01(rng) < 0.15;
  const double wx = side * u01(rng), wy = side * u01(rng), wr = side * (0.1 + 0.15 * u01(rng));
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      auto& c = cls[std::size_t(y) * side + x];
      const int along = horizontal ? y : x;
      if (std::abs(along - road_at) < road_w) c = kRoad;
      if (water && (x - wx) * (x - wx) + (y - wy) * (y - wy) < wr * wr) c = kWater;
    }
  return cls;
}

inline RgbImage render(const std::vector<std::uint8_t>& cls, int side,
                       const std::array<std::array<int, 3>, 4>& palette, double jitter, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, jitter);
  RgbImage img(side, side);
  for (std::size_t i = 0; i < cls.size(); ++i)
    for (int c = 0; c < 3; ++c) {
      const double v = palette[cls[i]][std::size_t(c)] + (jitter > 0 ? nd(rng) : 0.0);
      img.pixels[3 * i + std::size_t(c)] = std::uint8_t(std::clamp(std::lround(v), 0L, 255L));
    }
  return img;
}

}  // namespace detail

struct World {
  Dataset dataset;
  std::vector<Tile> tiles;           // satellite then segmented per parcel
  std::vector<double> ground_truth;  // noiseless price per parcel, dataset order
};

inline World generate_world(const WorldConfig& cfg) {
  cfg.validate();
  World w;
  const auto layout = detail::province_layout(cfg);
  std::vector<LandParcel> parcels;
  std::vector<double> logs;
  std::vector<double> visible;  // location and condition terms: the part of the price seen from above
  std::size_t next_id = 0;
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const auto& prov = layout[k];
    for (std::size_t n = 0; n < prov.count; ++n, ++next_id) {
      char id[16];
      std::snprintf(id, sizeof id, "L%05zu", next_id);
      std::mt19937_64 rng(mix_seed(cfg.seed, 0x9a2c0000 + next_id));
      std::normal_distribution<double> nd(0.0, 1.0);
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      LandParcel p;
      p.id = id;
      p.province = prov.name;
      const double dy = prov.sigma_km * nd(rng), dx = prov.sigma_km * nd(rng);
      p.lat = prov.lat + detail::km_to_lat(dy);
      p.lon = prov.lon + detail::km_to_lon(dx, prov.lat);
      p.appraisal_date = Date::from_days(cfg.start_date.days_since_epoch() +
                                         std::int64_t(u01(rng) * cfg.date_span_days) % cfg.date_span_days);

      const double area = 300.0 * std::exp(0.6 * nd(rng));
      const double frontage = std::sqrt(area * 4.0) * (0.3 + 0.4 * u01(rng));
      p.continuous = {3.0 + 17.0 * u01(rng),
                      -400.0 * std::log(1.0 - u01(rng)),
                      area,
                      frontage,
                      std::hypot(dx, dy) * (0.8 + 0.4 * u01(rng)),
                      50.0 * u01(rng),
                      area * 4.0 / frontage * (0.9 + 0.2 * u01(rng)),
                      1.0 + u01(rng)};
      for (auto& v : p.continuous) v = std::round(v * 100.0) / 100.0;

      const double lu = u01(rng);
      const std::string land_use = lu < 0.6 ? "residential" : lu < 0.75 ? "commercial" : lu < 0.9 ? "agricultural"
                                                                                                  : "industrial";
      std::size_t street = 0;
      double best = 1e300;
      for (std::size_t b = 0; b < prov.bumps.size(); ++b) {
        const double d = haversine_km({p.lat, p.lon}, {prov.bumps[b].lat, prov.bumps[b].lon});
        if (d < best) best = d, street = b;
      }
      const double z = u01(rng);
      const std::string zoning = land_use == "commercial" ? (z < 0.7 ? "high" : "medium")
                                 : land_use == "agricultural" ? (z < 0.8 ? "low" : "medium")
                                                              : (z < 0.4 ? "low" : z < 0.8 ? "medium" : "high");
      const double t = u01(rng);
      const std::string title = t < 0.7 ? "chanote" : t < 0.9 ? "ns3k" : "ns3";
      p.categorical = {land_use, "s" + std::to_string(k + 1) + "_" + std::to_string(street), zoning, title};

      const double lt = detail::log_truth(cfg, layout, p);
      const double sigma = cfg.noise_level * std::sqrt(std::numbers::pi / 2.0);
      p.price = std::exp(lt + sigma * nd(rng));
      logs.push_back(lt);
      visible.push_back(lt - prov.log_base - detail::attribute_effect(p, cfg.attribute_scale));
      parcels.push_back(std::move(p));
    }
  }

  w.dataset = Dataset(std::move(parcels), kSynthContinuous, kSynthCategorical);

  // tiles: vegetation share follows the standardized visible price component
  double mean = 0, var = 0;
  for (double v : visible) mean += v;
  mean /= double(std::max<std::size_t>(1, visible.size()));
  for (double v : visible) var += (v - mean) * (v - mean);
  const double sd = visible.size() > 1 ? std::sqrt(var / double(visible.size() - 1)) : 1.0;
  for (std::size_t i = 0; i < w.dataset.size(); ++i) {
    const auto& p = w.dataset[i];
    const std::uint64_t ts = mix_seed(cfg.seed, 0x711e0000 + i);
    std::mt19937_64 rng(ts);
    std::normal_distribution<double> nd(0.0, 1.0);
    const double zscore = sd > 0 ? (visible[i] - mean) / sd : 0.0;
    const double veg =
        std::clamp(0.08 + 0.74 / (1.0 + std::exp(-1.7 * cfg.tile_coupling * zscore)) + cfg.tile_noise * nd(rng), 0.0, 1.0);
    const auto cls = detail::cover_map(cfg.tile_side, veg, mix_seed(ts, 1));
    w.tiles.emplace_back(p.id, TileKind::satellite,
                         detail::render(cls, cfg.tile_side, detail::kSatellitePalette, 12.0, mix_seed(ts, 2)));
    w.tiles.emplace_back(p.id, TileKind::segmented,
                         detail::render(cls, cfg.tile_side, detail::kSegmentedPalette, 0.0, mix_seed(ts, 3)));
    w.ground_truth.push_back(std::exp(logs[i]));
  }
  return w;
}

/// Noiseless price of a parcel under the world's latent price field.
inline double world_ground_truth(const WorldConfig& cfg, const LandParcel& p) {
  cfg.validate();
  return std::exp(detail::log_truth(cfg, detail::province_layout(cfg), p));
}

inline std::string ground_truth_csv(const World& w) {
  std::string out = "id,truth_price\n";
  for (std::size_t i = 0; i < w.dataset.size(); ++i)
    out += w.dataset[i].id + ',' + format_fixed(w.ground_truth[i], 4) + '\n';
  return out;
}

inline void save_world(const World& w, const std::filesystem::path& dir) {
  write_parcels(w.dataset, dir / "parcels.csv");
  write_text_file(dir / "ground_truth.csv", ground_truth_csv(w));
  const TileStore store(dir / "tiles");
  for (const auto& t : w.tiles) store.save(t);
}

}  // namespace landval
