#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eagle/image.hpp"

namespace eagle {

/// A raster slide with its physical resolution in microns per pixel.
struct SlideImage {
  std::string slide_id;
  RgbImage pixels;
  double mpp = 0.5;
  std::string cohort;

  int width_px() const noexcept { return pixels.width(); }
  int height_px() const noexcept { return pixels.height(); }
};

/// One grid cell. Coordinates and size are in pixels of the slide raster at
/// resolution `mpp`.
struct TileSpec {
  int x_px = 0;
  int y_px = 0;
  int size_px = 224;
  double mpp = 2.0;

  friend bool operator==(const TileSpec&, const TileSpec&) = default;
};

/// Row-major order on (y, x); used for selection tie-breaks.
inline bool row_major_less(const TileSpec& a, const TileSpec& b) noexcept {
  return a.y_px != b.y_px ? a.y_px < b.y_px : a.x_px < b.x_px;
}

struct Tile {
  TileSpec spec;
  /// size_px x size_px, or downsample_to_px x downsample_to_px when the
  /// tessellation config requested a post-filter resize.
  RgbImage pixels;
};

struct TessellationConfig {
  int tile_px = 224;
  double target_mpp = 2.0;
  double canny_low = 40.0;
  double canny_high = 100.0;
  double min_edge_fraction = 0.02;
  std::optional<int> downsample_to_px;

  /// Throws InvalidArgument on an inconsistent configuration.
  void validate() const;
};

/// Downscales to `target_mpp`. Throws UpsamplingRequested for target_mpp < slide.mpp.
SlideImage rescale(const SlideImage& slide, double target_mpp);

/// Non-overlapping grid anchored at the origin, partial edge cells dropped,
/// row-major.
std::vector<TileSpec> plan_grid(const SlideImage& slide, const TessellationConfig& cfg);

/// Binary Canny edge map (1 = edge) over a luminance raster: 5x5 Gaussian
/// (sigma 1.4), 3x3 Sobel, L2 magnitude, non-maximum suppression, then
/// 8-connected hysteresis. Pixels are edge candidates when the magnitude is
/// strictly above `low`; seeds need strictly above `high`.
std::vector<std::uint8_t> canny(const std::vector<float>& gray, int width, int height, double low,
                                double high);

double edge_fraction(const Tile& tile, double canny_low, double canny_high);
double edge_fraction(const RgbImage& raster, double canny_low, double canny_high);

/// Rescales, grids and keeps tiles whose edge fraction is >= min_edge_fraction.
std::vector<Tile> tessellate(const SlideImage& slide, const TessellationConfig& cfg);

}  // namespace eagle
