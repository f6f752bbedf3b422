#pragma once

#include <png.h>

#include <cstring>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "landval/imagery.hpp"

namespace landval {

namespace detail {

struct PngImage {
  png_image img;
  PngImage() {
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&img); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

inline RgbImage finish_png_read(PngImage& png, const std::string& what) {
  png.img.format = PNG_FORMAT_RGB;
  RgbImage out(int(png.img.width), int(png.img.height));
  if (!png_image_finish_read(&png.img, nullptr, out.pixels.data(), 0, nullptr))
    throw DataError("cannot decode PNG " + what + ": " + png.img.message);
  return out;
}

}  // namespace detail

inline RgbImage decode_png(std::span<const std::uint8_t> bytes) {
  detail::PngImage png;
  if (!png_image_begin_read_from_memory(&png.img, bytes.data(), bytes.size()))
    throw DataError(std::string("cannot decode PNG bytes: ") + png.img.message);
  return detail::finish_png_read(png, "bytes");
}

inline RgbImage read_png(const std::filesystem::path& path) {
  detail::PngImage png;
  if (!png_image_begin_read_from_file(&png.img, path.c_str()))
    throw DataError("cannot read PNG " + path.string() + ": " + png.img.message);
  return detail::finish_png_read(png, path.string());
}

inline void write_png(const RgbImage& image, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  detail::PngImage png;
  png.img.width = png_uint_32(image.width);
  png.img.height = png_uint_32(image.height);
  png.img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png.img, path.c_str(), 0, image.pixels.data(), 0, nullptr))
    throw Error("cannot write PNG " + path.string() + ": " + png.img.message);
}

/// Directory of tiles laid out as `<root>/<kind>/<parcel_id>.png`.
class TileStore {
 public:
  explicit TileStore(std::filesystem::path root) : root_(std::move(root)) {}

  [[nodiscard]] const std::filesystem::path& root() const { return root_; }

  [[nodiscard]] std::filesystem::path path(TileKind kind, std::string_view parcel_id) const {
    return root_ / std::string(to_string(kind)) / (std::string(parcel_id) + ".png");
  }

  [[nodiscard]] bool contains(TileKind kind, std::string_view parcel_id) const {
    return std::filesystem::exists(path(kind, parcel_id));
  }

  [[nodiscard]] std::optional<Tile> load(TileKind kind, std::string_view parcel_id) const {
    auto p = path(kind, parcel_id);
    if (!std::filesystem::exists(p)) return std::nullopt;
    return Tile(std::string(parcel_id), kind, read_png(p));
  }

  void save(const Tile& t) const { write_png(t.image, path(t.kind, t.parcel_id)); }

 private:
  std::filesystem::path root_;
};

}  // namespace landval
