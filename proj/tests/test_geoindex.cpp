#include <gtest/gtest.h>

#include <numbers>
#include <random>
#include <set>

#include "landval/geoindex.hpp"
#include "test_util.hpp"

namespace landval {
namespace {

using testing::make_parcel;

TEST(Haversine, Identity) { EXPECT_EQ(haversine_km({13.7, 100.5}, {13.7, 100.5}), 0.0); }

TEST(Haversine, MeridianArc) {
  // Along a meridian the great-circle distance is R times the latitude change.
  const double arc = kEarthRadiusKm * 0.027 * std::numbers::pi / 180.0;
  EXPECT_NEAR(haversine_km({0, 0}, {0.027, 0}), arc, 1e-9);
  EXPECT_NEAR(haversine_km({0, 0}, {0.027, 0}), 3.00227, 1e-3);
}

TEST(Haversine, SymmetricBitForBit) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> lat(-89, 89), lon(-180, 180);
  for (int i = 0; i < 1000; ++i) {
    LatLon a{lat(rng), lon(rng)}, b{lat(rng), lon(rng)};
    EXPECT_EQ(haversine_km(a, b), haversine_km(b, a));
  }
}

TEST(Haversine, MatchesVectorChordOracle) {
  // Chord length between unit vectors gives the central angle independently.
  auto oracle = [](LatLon a, LatLon b) {
    auto vec = [](LatLon p) {
      const double la = p.lat * std::numbers::pi / 180, lo = p.lon * std::numbers::pi / 180;
      return std::array<double, 3>{std::cos(la) * std::cos(lo), std::cos(la) * std::sin(lo), std::sin(la)};
    };
    auto u = vec(a), v = vec(b);
    const double cx = u[1] * v[2] - u[2] * v[1], cy = u[2] * v[0] - u[0] * v[2], cz = u[0] * v[1] - u[1] * v[0];
    const double dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    return kEarthRadiusKm * std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), dot);
  };
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> lat(-89, 89), lon(-180, 180);
  for (int i = 0; i < 1000; ++i) {
    LatLon a{lat(rng), lon(rng)}, b{lat(rng), lon(rng)};
    EXPECT_NEAR(haversine_km(a, b), oracle(a, b), 1e-6);
  }
}

TEST(Haversine, TriangleInequality) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lat(-89, 89), lon(-180, 180);
  for (int i = 0; i < 2000; ++i) {
    LatLon a{lat(rng), lon(rng)}, b{lat(rng), lon(rng)}, c{lat(rng), lon(rng)};
    EXPECT_LE(haversine_km(a, c), haversine_km(a, b) + haversine_km(b, c) + 1e-9);
  }
}

Dataset random_parcels(std::size_t n, std::uint64_t seed, double lat0, double lon0, double span_deg) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-span_deg, span_deg);
  std::vector<LandParcel> ps;
  for (std::size_t i = 0; i < n; ++i) {
    double lon = lon0 + u(rng);
    if (lon > 180) lon -= 360;
    ps.push_back(make_parcel("p" + std::to_string(i), lat0 + u(rng), lon, 1.0));
  }
  return Dataset(ps, {}, {});
}

std::set<std::size_t> brute_force(const Dataset& ds, LatLon c, double r, std::string_view exclude) {
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds[i].id != exclude && haversine_km(c, location(ds[i])) <= r) out.insert(i);
  return out;
}

TEST(SpatialIndex, MatchesBruteForceOn500Parcels) {
  auto ds = random_parcels(500, 10, 13.7, 100.5, 0.15);
  SpatialIndex idx(ds, 3.0);
  std::mt19937_64 rng(11);
  for (std::size_t q = 0; q < 100; ++q) {
    const auto& p = ds[rng() % ds.size()];
    const double r = 0.5 + 4.0 * double(rng() % 1000) / 1000.0;
    auto got = idx.neighbors_within(p, r);
    std::set<std::size_t> ids;
    for (const auto& n : got) ids.insert(n.index);
    EXPECT_EQ(ids.size(), got.size());
    EXPECT_EQ(ids, brute_force(ds, location(p), r, p.id)) << "query " << q;
    for (std::size_t k = 1; k < got.size(); ++k) EXPECT_LE(got[k - 1].distance_km, got[k].distance_km);
  }
}

TEST(SpatialIndex, MatchesBruteForceNearPoleAndDateLine) {
  for (auto [lat, lon] : {std::pair{89.95, 0.0}, std::pair{-89.9, 45.0}, std::pair{10.0, 179.99}}) {
    auto ds = random_parcels(300, 12, lat, lon, 0.05);
    SpatialIndex idx(ds, 3.0);
    for (std::size_t q = 0; q < 30; ++q) {
      const auto& p = ds[q];
      std::set<std::size_t> ids;
      for (const auto& n : idx.neighbors_within(p, 3.0)) ids.insert(n.index);
      EXPECT_EQ(ids, brute_force(ds, location(p), 3.0, p.id)) << lat << "," << lon;
    }
  }
}

TEST(SpatialIndex, ExcludesSelf) {
  auto ds = random_parcels(50, 13, 0, 0, 0.01);
  SpatialIndex idx(ds, 3.0);
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (const auto& n : idx.neighbors_within(ds[i], 3.0)) EXPECT_NE(n.index, i);
}

TEST(SpatialIndex, TinyRadiusIsEmpty) {
  auto ds = random_parcels(50, 14, 0, 0, 0.5);
  SpatialIndex idx(ds, 3.0);
  EXPECT_TRUE(idx.neighbors_within(ds[0], 1e-9).empty());
}

TEST(SpatialIndex, RejectsNonPositiveCell) {
  Dataset ds;
  EXPECT_THROW(SpatialIndex(ds, 0.0), ConfigError);
}

}  // namespace
}  // namespace landval
