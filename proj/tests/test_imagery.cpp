#include <gtest/gtest.h>

#include <random>

#include "landval/imagery.hpp"
#include "landval/tile_store.hpp"
#include "test_util.hpp"

namespace landval {
namespace {

RgbImage solid(int side, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  RgbImage img(side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      img.at(y, x, 0) = r;
      img.at(y, x, 1) = g;
      img.at(y, x, 2) = b;
    }
  return img;
}

RgbImage noise_image(int side, std::uint64_t seed) {
  RgbImage img(side, side);
  std::mt19937_64 rng(seed);
  for (auto& px : img.pixels) px = std::uint8_t(rng() & 0xff);
  return img;
}

Tile tile(RgbImage img, TileKind k = TileKind::satellite) { return Tile("t", k, std::move(img)); }

TEST(Resize, SameSideIsIdentity) {
  auto t = tile(noise_image(64, 1));
  EXPECT_EQ(resize(t, 64), t);
}

TEST(Resize, CheckerboardAveragesToMidGray) {
  RgbImage board(2, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x)
      for (int c = 0; c < 3; ++c) board.at(y, x, c) = (x + y) % 2 ? 255 : 0;
  auto out = resize_bilinear(board, 1, 1);
  for (int c = 0; c < 3; ++c) {
    EXPECT_GE(out.at(0, 0, c), 127);
    EXPECT_LE(out.at(0, 0, c), 128);
  }
}

TEST(Resize, HalvingAveragesBlocks) {
  auto src = noise_image(128, 2);
  auto out = resize(tile(src), 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      for (int c = 0; c < 3; ++c) {
        const double mean = (src.at(2 * y, 2 * x, c) + src.at(2 * y + 1, 2 * x, c) + src.at(2 * y, 2 * x + 1, c) +
                             src.at(2 * y + 1, 2 * x + 1, c)) /
                            4.0;
        EXPECT_LE(std::abs(out.image.at(y, x, c) - mean), 0.5 + 1e-9);
      }
}

TEST(Resize, UnsupportedSideRejected) { EXPECT_THROW((void)resize(tile(noise_image(64, 3)), 100), ShapeError); }

TEST(Tile, NonSquareRejected) { EXPECT_THROW(Tile("x", TileKind::satellite, RgbImage(64, 128)), ShapeError); }

TEST(Augment, ZeroProbabilitiesIsIdentity) {
  auto img = noise_image(64, 4);
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_EQ(augment(img, AugmentConfig::none(), s), img);
}

TEST(Augment, ZeroNoiseSigmaIsIdentity) {
  auto img = noise_image(64, 5);
  AugmentConfig cfg = AugmentConfig::none();
  cfg.p_noise = 1.0;
  cfg.noise_sigma = 0.0;
  EXPECT_EQ(augment(img, cfg, 9), img);
}

TEST(Augment, SameSeedSameOutput) {
  auto img = noise_image(64, 6);
  AugmentConfig cfg;
  EXPECT_EQ(augment(img, cfg, 42), augment(img, cfg, 42));
}

TEST(Augment, ForcedHflipTwiceIsOriginal) {
  auto img = noise_image(64, 7);
  AugmentConfig cfg = AugmentConfig::none();
  cfg.p_hflip = 1.0;
  auto once = augment(img, cfg, 1);
  EXPECT_NE(once, img);
  EXPECT_EQ(once, hflip(img));
  EXPECT_EQ(augment(once, cfg, 2), img);
}

TEST(Augment, RejectsBadProbability) {
  AugmentConfig cfg;
  cfg.p_rotate = 1.5;
  EXPECT_THROW((void)augment(noise_image(64, 8), cfg, 0), ConfigError);
}

TEST(Augment, FourRotationsIsIdentity) {
  auto img = noise_image(64, 9);
  EXPECT_EQ(rot90(rot90(rot90(rot90(img)))), img);
}

TEST(ColorStats, PureGreen) {
  auto s = color_stats(solid(64, 0, 255, 0));
  EXPECT_DOUBLE_EQ(s.greenness, 1.0);
  EXPECT_DOUBLE_EQ(s.blueness, -0.5);
  EXPECT_NEAR(s.darkness, 2.0 / 3.0, 1e-12);
}

TEST(ColorStats, UniformGray) {
  auto s = color_stats(solid(64, 128, 128, 128));
  EXPECT_EQ(s.greenness, 0.0);
  EXPECT_EQ(s.blueness, 0.0);
  EXPECT_NEAR(s.darkness, 1.0 - 128.0 / 255.0, 1e-12);
  EXPECT_NEAR(s.darkness, 0.498, 1e-3);
}

TEST(ColorStats, WhiteHasZeroDarkness) { EXPECT_EQ(color_stats(solid(64, 255, 255, 255)).darkness, 0.0); }

TEST(ColorStats, InvariantUnderFlipsAndRotation) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto img = noise_image(64, 100 + seed);
    const auto s = color_stats(img);
    EXPECT_EQ(color_stats(rot90(img)), s);
    EXPECT_EQ(color_stats(hflip(img)), s);
    EXPECT_EQ(color_stats(vflip(img)), s);
  }
}

TEST(ColorStats, MatchesPerPixelMean) {
  auto img = noise_image(64, 11);
  double g = 0, b = 0, d = 0;
  const int n = 64 * 64;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const double R = img.at(y, x, 0), G = img.at(y, x, 1), B = img.at(y, x, 2);
      g += (2 * G - R - B) / 510.0;
      b += (2 * B - R - G) / 510.0;
      d += 1.0 - (R + G + B) / 765.0;
    }
  auto s = color_stats(img);
  EXPECT_NEAR(s.greenness, g / n, 1e-12);
  EXPECT_NEAR(s.blueness, b / n, 1e-12);
  EXPECT_NEAR(s.darkness, d / n, 1e-12);
}

TEST(ColorDiff, IdenticalTilesGiveZero) {
  auto t = tile(noise_image(64, 12));
  auto d = color_diff_features(t, t);
  EXPECT_EQ(d, (std::array<double, 3>{0, 0, 0}));
}

TEST(ColorDiff, GreenVersusBlue) {
  auto d = color_diff_features(tile(solid(64, 0, 255, 0)), tile(solid(64, 0, 0, 255)));
  EXPECT_DOUBLE_EQ(d[0], 1.5);
  EXPECT_DOUBLE_EQ(d[1], 1.5);
  EXPECT_DOUBLE_EQ(d[2], 0.0);
}

TEST(ColorDiff, SymmetricAndNonNegative) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto a = tile(noise_image(64, 200 + s)), b = tile(noise_image(64, 300 + s));
    auto ab = color_diff_features(a, b), ba = color_diff_features(b, a);
    EXPECT_EQ(ab, ba);
    for (double v : ab) EXPECT_GE(v, 0.0);
  }
}

TEST(ColorDiff, SideMismatchRejected) {
  EXPECT_THROW((void)color_diff_features(tile(solid(64, 1, 1, 1)), tile(solid(128, 1, 1, 1))), ShapeError);
}

TEST(TileStore, PngRoundTrip) {
  testing::TempDir dir;
  TileStore store(dir.path());
  Tile t("p1", TileKind::segmented, noise_image(64, 13));
  EXPECT_FALSE(store.contains(TileKind::segmented, "p1"));
  store.save(t);
  ASSERT_TRUE(store.contains(TileKind::segmented, "p1"));
  EXPECT_EQ(*store.load(TileKind::segmented, "p1"), t);
  EXPECT_FALSE(store.load(TileKind::satellite, "p1").has_value());
}

}  // namespace
}  // namespace landval
