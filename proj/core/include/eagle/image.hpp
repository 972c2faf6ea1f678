#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace eagle {

/// Interleaved 8-bit RGB raster, row-major.
class RgbImage {
public:
  RgbImage() = default;
  RgbImage(int width, int height, std::uint8_t fill = 0);
  RgbImage(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return width_ == 0 || height_ == 0; }

  std::span<const std::uint8_t> bytes() const noexcept { return pixels_; }
  std::span<std::uint8_t> bytes() noexcept { return pixels_; }

  std::uint8_t* pixel(int x, int y) noexcept {
    return pixels_.data() + (static_cast<std::size_t>(y) * width_ + x) * 3;
  }
  const std::uint8_t* pixel(int x, int y) const noexcept {
    return pixels_.data() + (static_cast<std::size_t>(y) * width_ + x) * 3;
  }

  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
    auto* p = pixel(x, y);
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }

  /// Copies the w x h window at (x, y). The window must lie inside the image.
  RgbImage crop(int x, int y, int w, int h) const;

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Bilinear resampling with pixel-center alignment. Results are rounded to
/// the nearest integer, so a constant field stays exactly constant.
RgbImage resize_bilinear(const RgbImage& src, int out_width, int out_height);

/// Rec.601 luma, 0.299 R + 0.587 G + 0.114 B, as floating point.
std::vector<float> luminance(const RgbImage& img);

RgbImage read_png(const std::filesystem::path& path);
void write_png(const RgbImage& img, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const RgbImage& img);
RgbImage decode_png(std::span<const std::uint8_t> data);

/// Reads PNG, or binary PPM (P6) when the extension is .ppm.
RgbImage read_image(const std::filesystem::path& path);

}  // namespace eagle
