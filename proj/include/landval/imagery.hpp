#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "landval/common.hpp"

namespace landval {

enum class TileKind : std::uint8_t { satellite, segmented };

inline constexpr std::array<TileKind, 2> kAllTileKinds = {TileKind::satellite, TileKind::segmented};

inline std::string_view to_string(TileKind k) {
  return k == TileKind::satellite ? "satellite" : "segmented";
}

inline TileKind parse_tile_kind(std::string_view s) {
  if (s == "satellite") return TileKind::satellite;
  if (s == "segmented") return TileKind::segmented;
  throw ConfigError("unknown tile kind '" + std::string(s) + "'");
}

/// Interleaved 8-bit RGB raster of arbitrary size.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3, row-major

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(std::size_t(w) * std::size_t(h) * 3, 0) {}

  std::uint8_t& at(int y, int x, int c) { return pixels[(std::size_t(y) * width + x) * 3 + c]; }
  [[nodiscard]] std::uint8_t at(int y, int x, int c) const {
    return pixels[(std::size_t(y) * width + x) * 3 + c];
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Bilinear resampling with half-pixel centers (no corner alignment), so
/// downsampling by two averages each 2x2 block.
inline RgbImage resize_bilinear(const RgbImage& src, int out_w, int out_h) {
  if (src.width <= 0 || src.height <= 0 || out_w <= 0 || out_h <= 0)
    throw ShapeError("resize_bilinear: empty image");
  if (out_w == src.width && out_h == src.height) return src;
  RgbImage dst(out_w, out_h);
  const double sx = double(src.width) / out_w, sy = double(src.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(src.height - 1));
    const int y0 = int(fy), y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(src.width - 1));
      const int x0 = int(fx), x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = src.at(y0, x0, c) * (1 - wx) + src.at(y0, x1, c) * wx;
        const double bot = src.at(y1, x0, c) * (1 - wx) + src.at(y1, x1, c) * wx;
        dst.at(y, x, c) = std::uint8_t(std::lround(top * (1 - wy) + bot * wy));
      }
    }
  }
  return dst;
}

inline constexpr std::array<int, 4> kTileSides = {64, 128, 256, 512};

inline bool is_supported_side(int side) {
  return std::find(kTileSides.begin(), kTileSides.end(), side) != kTileSides.end();
}

/// Square map tile centered on a parcel (~740 m on a side at the default zoom).
struct Tile {
  std::string parcel_id;
  TileKind kind = TileKind::satellite;
  RgbImage image;

  Tile() = default;
  Tile(std::string id, TileKind k, RgbImage img) : parcel_id(std::move(id)), kind(k), image(std::move(img)) {
    if (image.width != image.height || !is_supported_side(image.width))
      throw ShapeError("tile '" + parcel_id + "': side must be square and one of 64/128/256/512, got " +
                       std::to_string(image.width) + "x" + std::to_string(image.height));
  }

  [[nodiscard]] int side() const { return image.width; }

  friend bool operator==(const Tile&, const Tile&) = default;
};

inline Tile resize(const Tile& t, int side) {
  if (!is_supported_side(side)) throw ShapeError("unsupported tile side " + std::to_string(side));
  return Tile(t.parcel_id, t.kind, resize_bilinear(t.image, side, side));
}

// ---------------------------------------------------------------------------
// Geometric / photometric transforms
// ---------------------------------------------------------------------------

inline RgbImage hflip(const RgbImage& in) {
  RgbImage out(in.width, in.height);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, in.width - 1 - x, c) = in.at(y, x, c);
  return out;
}

inline RgbImage vflip(const RgbImage& in) {
  RgbImage out(in.width, in.height);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(in.height - 1 - y, x, c) = in.at(y, x, c);
  return out;
}

/// 90 degrees clockwise.
inline RgbImage rot90(const RgbImage& in) {
  RgbImage out(in.height, in.width);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, in.height - 1 - y, c) = in.at(y, x, c);
  return out;
}

inline Tile hflip(const Tile& t) { return Tile(t.parcel_id, t.kind, hflip(t.image)); }
inline Tile vflip(const Tile& t) { return Tile(t.parcel_id, t.kind, vflip(t.image)); }
inline Tile rot90(const Tile& t) { return Tile(t.parcel_id, t.kind, rot90(t.image)); }

struct AugmentConfig {
  double p_rotate = 0.5;  // rotate by a uniformly chosen multiple of 90 degrees
  double p_hflip = 0.5;
  double p_vflip = 0.5;
  double p_jitter = 0.5;
  double jitter = 0.1;  // per-channel brightness factor drawn from [1-j, 1+j]
  double p_noise = 0.5;
  double noise_sigma = 4.0;  // in 8-bit intensity units

  static AugmentConfig none() { return {0, 0, 0, 0, 0, 0, 0}; }

  void validate() const {
    for (double p : {p_rotate, p_hflip, p_vflip, p_jitter, p_noise})
      if (!(p >= 0 && p <= 1)) throw ConfigError("augmentation probabilities must lie in [0,1]");
    if (!(jitter >= 0 && jitter < 1)) throw ConfigError("augmentation jitter must lie in [0,1)");
    if (!(noise_sigma >= 0)) throw ConfigError("augmentation noise sigma must be >= 0");
  }
};

/// Applies each transform independently with its configured probability. The
/// random draws are made in a fixed order whether or not a transform fires, so
/// the stream layout does not depend on earlier outcomes.
inline RgbImage augment(const RgbImage& in, const AugmentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const bool do_rot = u01(rng) < cfg.p_rotate;
  const int quarter_turns = 1 + int(u01(rng) * 3.0) % 3;
  const bool do_h = u01(rng) < cfg.p_hflip;
  const bool do_v = u01(rng) < cfg.p_vflip;
  const bool do_jitter = u01(rng) < cfg.p_jitter;
  std::array<double, 3> gain{};
  for (auto& g : gain) g = 1.0 + cfg.jitter * (2.0 * u01(rng) - 1.0);
  const bool do_noise = u01(rng) < cfg.p_noise && cfg.noise_sigma > 0;

  RgbImage out = in;
  if (do_rot)
    for (int k = 0; k < quarter_turns; ++k) out = rot90(out);
  if (do_h) out = hflip(out);
  if (do_v) out = vflip(out);
  if (do_jitter) {
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
      out.pixels[i] = std::uint8_t(std::clamp(std::lround(out.pixels[i] * gain[i % 3]), 0L, 255L));
  }
  if (do_noise) {
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (auto& px : out.pixels) px = std::uint8_t(std::clamp(std::lround(px + noise(rng)), 0L, 255L));
  }
  return out;
}

inline Tile augment(const Tile& t, const AugmentConfig& cfg, std::uint64_t seed) {
  return Tile(t.parcel_id, t.kind, augment(t.image, cfg, seed));
}

// ---------------------------------------------------------------------------
// Hand-engineered color features
// ---------------------------------------------------------------------------

struct ColorStats {
  double greenness = 0.0;  // mean (2G-R-B)/510, in [-1,1]
  double blueness = 0.0;   // mean (2B-R-G)/510, in [-1,1]
  double darkness = 0.0;   // 1 - mean(R+G+B)/765, in [0,1]

  friend bool operator==(const ColorStats&, const ColorStats&) = default;
};

/// Sums are accumulated in integers so the result is independent of pixel
/// order (exactly invariant to flips and rotations).
inline ColorStats color_stats(const RgbImage& img) {
  const std::size_t n = std::size_t(img.width) * std::size_t(img.height);
  if (n == 0) throw ShapeError("color_stats: empty image");
  std::int64_t g = 0, b = 0, sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t R = img.pixels[3 * i], G = img.pixels[3 * i + 1], B = img.pixels[3 * i + 2];
    g += 2 * G - R - B;
    b += 2 * B - R - G;
    sum += R + G + B;
  }
  const double dn = double(n);
  return {double(g) / (510.0 * dn), double(b) / (510.0 * dn), 1.0 - double(sum) / (765.0 * dn)};
}

inline ColorStats color_stats(const Tile& t) { return color_stats(t.image); }

inline std::array<double, 3> color_diff(const ColorStats& a, const ColorStats& b) {
  return {std::abs(a.greenness - b.greenness), std::abs(a.blueness - b.blueness),
          std::abs(a.darkness - b.darkness)};
}

inline std::array<double, 3> color_diff_features(const Tile& a, const Tile& b) {
  if (a.side() != b.side())
    throw ShapeError("color_diff_features: tile sides differ (" + std::to_string(a.side()) + " vs " +
                     std::to_string(b.side()) + ")");
  return color_diff(color_stats(a), color_stats(b));
}

}  // namespace landval
