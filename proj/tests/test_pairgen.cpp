#include <gtest/gtest.h>

#include <random>

#include "landval/pairgen.hpp"
#include "test_util.hpp"

namespace landval {
namespace {

using testing::make_parcel;

LandParcel priced(double price) { return make_parcel("x", 0, 0, price); }

TEST(LabelPair, Examples) {
  EXPECT_EQ(label_pair(priced(100), priced(115), 0.2), 1);
  EXPECT_EQ(label_pair(priced(100), priced(130), 0.2), 0);
  for (double tau : {1e-6, 0.05, 0.2, 3.0}) EXPECT_EQ(label_pair(priced(77), priced(77), tau), 1);
  EXPECT_EQ(label_pair(priced(100), priced(120), 0.2), 1);
  EXPECT_THROW((void)label_pair(priced(1), priced(1), 0.0), ConfigError);
}

TEST(LabelPair, OrientationsAgreeWithinMinRelativeGap) {
  std::mt19937_64 rng(1);
  std::lognormal_distribution<double> price(8.0, 0.4);
  for (int i = 0; i < 5000; ++i) {
    const double a = price(rng), b = price(rng), tau = 0.2;
    const int ab = label_pair(priced(a), priced(b), tau), ba = label_pair(priced(b), priced(a), tau);
    if (std::abs(a - b) / std::min(a, b) <= tau) {
      EXPECT_EQ(ab, 1);
      EXPECT_EQ(ba, 1);
    }
    if (ab != ba) EXPECT_NE(a, b);
  }
}

struct Fixture {
  AttributeSchema attrs;
  FeatureSchema schema;
  Fixture() {
    attrs.continuous = {"road_width", "area"};
    attrs.categorical = {"zone"};
    std::array<TileKind, 2> kinds = {TileKind::satellite, TileKind::segmented};
    schema = make_feature_schema(attrs, kinds);
  }
};

ParcelImagery imagery(double g, double b, double d) {
  ParcelImagery im;
  im.by_kind[0] = ColorStats{g, b, d};
  im.by_kind[1] = ColorStats{d, g, b};
  return im;
}

TEST(DiffFeatures, LayoutMatchesSchema) {
  Fixture f;
  EXPECT_EQ(f.schema.names(),
            (std::vector<std::string>{"d_road_width", "d_area", "same_zone", "color_satellite_greenness",
                                      "color_satellite_blueness", "color_satellite_darkness",
                                      "color_segmented_greenness", "color_segmented_blueness",
                                      "color_segmented_darkness", "img_missing", "distance_km"}));
}

TEST(DiffFeatures, IdenticalParcels) {
  Fixture f;
  auto p = make_parcel("p", 0, 0, 1, {}, "P", {5.0, 100.0}, {"res"});
  auto im = imagery(0.1, 0.2, 0.3);
  auto x = diff_features(p, p, im, im, 0.0, f.schema);
  EXPECT_EQ(x, (std::vector<double>{0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0}));
}

TEST(DiffFeatures, AbsoluteDifferencesAndFlags) {
  Fixture f;
  auto p = make_parcel("p", 0, 0, 1, {}, "P", {5.0, 100.0}, {"res"});
  auto q = make_parcel("q", 0, 0, 1, {}, "P", {3.5, 140.0}, {"com"});
  auto x = diff_features(p, q, imagery(0.5, 0.1, 0.2), imagery(0.25, 0.3, 0.2), 1.75, f.schema);
  ASSERT_EQ(x.size(), f.schema.size());
  EXPECT_DOUBLE_EQ(x[0], 1.5);
  EXPECT_DOUBLE_EQ(x[1], 40.0);
  EXPECT_EQ(x[2], 0.0);
  EXPECT_DOUBLE_EQ(x[3], 0.25);
  EXPECT_DOUBLE_EQ(x[4], 0.2);
  EXPECT_DOUBLE_EQ(x[5], 0.0);
  EXPECT_EQ(x[9], 0.0);
  EXPECT_EQ(x[10], 1.75);
}

TEST(DiffFeatures, MissingTileUsesSentinel) {
  Fixture f;
  auto p = make_parcel("p", 0, 0, 1, {}, "P", {1, 1}, {"a"});
  ParcelImagery none;
  auto x = diff_features(p, p, imagery(0.5, 0.5, 0.5), none, 0.3, f.schema);
  for (std::size_t i = 3; i < 9; ++i) EXPECT_EQ(x[i], 0.0);
  EXPECT_EQ(x[9], 1.0);
}

TEST(DiffFeatures, SymmetricProperty) {
  Fixture f;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 10), c(-1, 1);
  for (int i = 0; i < 500; ++i) {
    auto p = make_parcel("p", 0, 0, 1, {}, "P", {u(rng), u(rng)}, {rng() % 2 ? "a" : "b"});
    auto q = make_parcel("q", 0, 0, 1, {}, "P", {u(rng), u(rng)}, {rng() % 2 ? "a" : "b"});
    auto ip = imagery(c(rng), c(rng), u(rng) / 10), iq = imagery(c(rng), c(rng), u(rng) / 10);
    const double d = u(rng);
    auto xy = diff_features(p, q, ip, iq, d, f.schema), yx = diff_features(q, p, iq, ip, d, f.schema);
    EXPECT_EQ(xy, yx);
    for (double v : xy) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(DiffFeatures, ShapeMismatchRejected) {
  Fixture f;
  auto p = make_parcel("p", 0, 0, 1, {}, "P", {1}, {"a"});
  ParcelImagery none;
  EXPECT_THROW((void)diff_features(p, p, none, none, 0, f.schema), ShapeError);
}

struct World {
  Dataset ds;
  SplitAssignment split;
  std::vector<ParcelImagery> imagery;
  FeatureSchema schema;
};

World make_world(std::vector<LandParcel> ps, std::vector<Split> splits = {}) {
  World w;
  w.ds = Dataset(std::move(ps), {"road_width"}, {});
  if (splits.empty()) splits.assign(w.ds.size(), Split::train);
  w.split = SplitAssignment(splits);
  w.imagery.resize(w.ds.size());
  w.schema = make_feature_schema(w.ds.schema(), {});
  return w;
}

// 1 km of latitude in degrees.
const double kKmLat = 180.0 / (std::numbers::pi * kEarthRadiusKm);

TEST(BuildPairs, TwoParcelsOneKmApart) {
  auto w = make_world({make_parcel("a", 13.0, 100.0, 100, {}, "P", {1.0}),
                       make_parcel("b", 13.0 + kKmLat, 100.0, 130, {}, "P", {2.0})});
  SpatialIndex idx(w.ds, 3.0);
  auto pairs = build_pairs(w.ds, idx, w.split, w.imagery, w.schema, {});
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].primary, 0u);
  EXPECT_EQ(pairs[0].neighbor, 1u);
  EXPECT_EQ(pairs[1].primary, 1u);
  EXPECT_EQ(pairs[1].neighbor, 0u);
  for (const auto& r : pairs) EXPECT_NEAR(r.distance_km, 1.0, 1e-9);
  EXPECT_EQ(pairs[0].label, 0);  // 30/100 > 0.2
  EXPECT_EQ(pairs[1].label, 0);  // 30/130 > 0.2
  w = make_world({make_parcel("a", 13.0, 100.0, 100, {}, "P", {1.0}),
                  make_parcel("b", 13.0 + kKmLat, 100.0, 124, {}, "P", {2.0})});
  SpatialIndex idx2(w.ds, 3.0);
  pairs = build_pairs(w.ds, idx2, w.split, w.imagery, w.schema, {});
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].label, 0);  // 24/100
  EXPECT_EQ(pairs[1].label, 1);  // 24/124
}

TEST(BuildPairs, IsolatedParcelHasNoPairs) {
  auto w = make_world({make_parcel("a", 13.0, 100.0, 100, {}, "P", {1.0}),
                       make_parcel("b", 13.0 + kKmLat, 100.0, 100, {}, "P", {1.0}),
                       make_parcel("far", 14.0, 100.0, 100, {}, "P", {1.0})});
  SpatialIndex idx(w.ds, 3.0);
  auto pairs = build_pairs(w.ds, idx, w.split, w.imagery, w.schema, {});
  EXPECT_EQ(pairs.size(), 2u);
  for (const auto& r : pairs) {
    EXPECT_NE(r.primary, 2u);
    EXPECT_NE(r.neighbor, 2u);
  }
}

TEST(BuildPairs, NeighborsAreTrainOnlyAndCapped) {
  std::vector<LandParcel> ps;
  std::vector<Split> splits;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.02, 0.02);
  for (int i = 0; i < 120; ++i) {
    ps.push_back(make_parcel("p" + std::to_string(i), 13 + u(rng), 100 + u(rng), 100 + i, {}, "P", {1.0}));
    splits.push_back(i % 5 == 0 ? Split::val : i % 7 == 0 ? Split::test : Split::train);
  }
  auto w = make_world(ps, splits);
  SpatialIndex idx(w.ds, 3.0);
  PairConfig cfg;
  cfg.max_neighbors = 7;
  auto pairs = build_pairs(w.ds, idx, w.split, w.imagery, w.schema, cfg);
  std::map<std::size_t, int> per_primary;
  for (const auto& r : pairs) {
    EXPECT_EQ(w.split[r.neighbor], Split::train);
    EXPECT_EQ(r.split, w.split[r.primary]);
    EXPECT_LE(r.distance_km, cfg.radius_km);
    EXPECT_NE(r.primary, r.neighbor);
    for (double v : r.features) EXPECT_TRUE(std::isfinite(v));
    ++per_primary[r.primary];
  }
  EXPECT_EQ(per_primary.size(), 120u);
  for (auto [p, n] : per_primary) EXPECT_EQ(n, 7);
}

TEST(BuildPairs, CsvRoundTrip) {
  std::vector<LandParcel> ps;
  for (int i = 0; i < 20; ++i)
    ps.push_back(make_parcel("p" + std::to_string(i), 13 + 0.001 * i, 100, 100 + 3 * i, {}, "P", {0.1 * i}));
  auto w = make_world(ps);
  SpatialIndex idx(w.ds, 3.0);
  auto pairs = build_pairs(w.ds, idx, w.split, w.imagery, w.schema, {});
  testing::TempDir dir;
  write_text_file(dir / "pairs.csv", pairs_to_csv(w.ds, pairs, w.schema));
  EXPECT_EQ(load_pairs(dir / "pairs.csv", w.ds, w.schema), pairs);
  EXPECT_EQ(FeatureSchema::from_json(w.schema.to_json()), w.schema);
}

Matrix noise_and_label(std::size_t n, std::uint64_t seed, std::vector<int>& y) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  Matrix X(n, 4);
  y.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    y[r] = int(rng() % 2);
    X(r, 0) = n01(rng);
    X(r, 1) = y[r];
    X(r, 2) = n01(rng);
    X(r, 3) = n01(rng);
  }
  return X;
}

TEST(SelectFeatures, KeepAllIsIdentityMask) {
  std::vector<int> y;
  auto X = noise_and_label(300, 4, y);
  TreeConfig cfg;
  cfg.n_trees = 10;
  auto sel = select_features(X, y, 4, cfg);
  EXPECT_EQ(sel.mask, std::vector<bool>(4, true));
  EXPECT_EQ(select_features(X, y, 99, cfg).mask, std::vector<bool>(4, true));
}

TEST(SelectFeatures, LabelCopyRankedAboveNoise) {
  std::vector<int> y;
  auto X = noise_and_label(400, 5, y);
  TreeConfig cfg;
  cfg.n_trees = 20;
  auto sel = select_features(X, y, 1, cfg);
  EXPECT_EQ(sel.mask, (std::vector<bool>{false, true, false, false}));
  for (std::size_t f : {0u, 2u, 3u}) EXPECT_GT(sel.importance[1], sel.importance[f]);
}

TEST(SelectFeatures, SameSeedSameMask) {
  std::vector<int> y;
  auto X = noise_and_label(300, 6, y);
  TreeConfig cfg;
  cfg.n_trees = 10;
  cfg.seed = 123;
  auto a = select_features(X, y, 2, cfg), b = select_features(X, y, 2, cfg);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.importance, b.importance);
}

}  // namespace
}  // namespace landval
