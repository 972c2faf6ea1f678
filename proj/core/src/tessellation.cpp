#include "eagle/tessellation.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "eagle/error.hpp"

namespace eagle {

void TessellationConfig::validate() const {
  if (tile_px <= 0) throw Error(ErrorCode::kInvalidArgument, "tile_px must be positive");
  if (!(target_mpp > 0)) throw Error(ErrorCode::kInvalidArgument, "target_mpp must be positive");
  if (!(canny_low < canny_high)) {
    throw Error(ErrorCode::kInvalidArgument, "canny_low must be below canny_high");
  }
  if (!(min_edge_fraction >= 0.0 && min_edge_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "min_edge_fraction must lie in [0, 1]");
  }
  if (downsample_to_px && *downsample_to_px <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "downsample_to_px must be positive");
  }
}

SlideImage rescale(const SlideImage& slide, double target_mpp) {
  if (!(slide.mpp > 0) || !(target_mpp > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "mpp must be positive");
  }
  if (target_mpp < slide.mpp) {
    throw Error(ErrorCode::kUpsamplingRequested,
                "slide " + slide.slide_id + " is at " + std::to_string(slide.mpp) +
                    " mpp; cannot produce " + std::to_string(target_mpp));
  }
  if (target_mpp == slide.mpp) return slide;

  const double factor = slide.mpp / target_mpp;
  const int w = std::max(1, static_cast<int>(std::lround(slide.width_px() * factor)));
  const int h = std::max(1, static_cast<int>(std::lround(slide.height_px() * factor)));
  SlideImage out{slide.slide_id, resize_bilinear(slide.pixels, w, h), target_mpp, slide.cohort};
  return out;
}

std::vector<TileSpec> plan_grid(const SlideImage& slide, const TessellationConfig& cfg) {
  std::vector<TileSpec> specs;
  const int stride = cfg.tile_px;
  for (int y = 0; y + stride <= slide.height_px(); y += stride) {
    for (int x = 0; x + stride <= slide.width_px(); x += stride) {
      specs.push_back({x, y, stride, slide.mpp});
    }
  }
  return specs;
}

namespace {

// Replicated-border accessor.
inline float at(const std::vector<float>& img, int w, int h, int x, int y) {
  x = std::clamp(x, 0, w - 1);
  y = std::clamp(y, 0, h - 1);
  return img[static_cast<std::size_t>(y) * w + x];
}

std::array<float, 5> gaussian_kernel() {
  constexpr double sigma = 1.4;
  std::array<double, 5> k{};
  double sum = 0;
  for (int i = 0; i < 5; ++i) {
    const double d = i - 2;
    k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  std::array<float, 5> out{};
  for (std::size_t i = 0; i < 5; ++i) out[i] = static_cast<float>(k[i] / sum);
  return out;
}

std::vector<float> blur(const std::vector<float>& src, int w, int h) {
  static const auto k = gaussian_kernel();
  std::vector<float> tmp(src.size()), out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0;
      for (int i = -2; i <= 2; ++i) acc += k[static_cast<std::size_t>(i + 2)] * at(src, w, h, x + i, y);
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0;
      for (int i = -2; i <= 2; ++i) acc += k[static_cast<std::size_t>(i + 2)] * at(tmp, w, h, x, y + i);
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> canny(const std::vector<float>& gray, int w, int h, double low,
                                double high) {
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<std::uint8_t> edges(n, 0);
  if (n == 0) return edges;

  const auto smooth = blur(gray, w, h);
  std::vector<float> gx(n), gy(n), mag(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto p = [&](int dx, int dy) { return at(smooth, w, h, x + dx, y + dy); };
      const float sx = (p(1, -1) + 2 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2 * p(-1, 0) + p(-1, 1));
      const float sy = (p(-1, 1) + 2 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2 * p(0, -1) + p(1, -1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      gx[i] = sx;
      gy[i] = sy;
      mag[i] = std::sqrt(sx * sx + sy * sy);
    }
  }

  // Non-maximum suppression over four direction sectors. The comparison is
  // strict on the "previous" neighbor and non-strict on the "next" one, so a
  // symmetric two-pixel ridge keeps exactly one pixel.
  constexpr float kTan22 = 0.41421356f;  // tan(22.5 deg)
  constexpr float kTan67 = 2.41421356f;  // tan(67.5 deg)
  auto m_at = [&](int x, int y) -> float {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0.0f;
    return mag[static_cast<std::size_t>(y) * w + x];
  };
  enum : std::uint8_t { kNone = 0, kWeak = 1, kStrong = 2 };
  std::vector<std::uint8_t> cls(n, kNone);
  std::vector<std::size_t> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const float m = mag[i];
      if (!(m > low)) continue;
      const float ax = std::fabs(gx[i]);
      const float ay = std::fabs(gy[i]);
      bool keep;
      if (ay <= kTan22 * ax) {
        keep = m > m_at(x - 1, y) && m >= m_at(x + 1, y);
      } else if (ay >= kTan67 * ax) {
        keep = m > m_at(x, y - 1) && m >= m_at(x, y + 1);
      } else if ((gx[i] > 0) == (gy[i] > 0)) {
        keep = m > m_at(x - 1, y - 1) && m >= m_at(x + 1, y + 1);
      } else {
        keep = m > m_at(x + 1, y - 1) && m >= m_at(x - 1, y + 1);
      }
      if (!keep) continue;
      if (m > high) {
        cls[i] = kStrong;
        stack.push_back(i);
      } else {
        cls[i] = kWeak;
      }
    }
  }

  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    edges[i] = 1;
    const int x = static_cast<int>(i % static_cast<std::size_t>(w));
    const int y = static_cast<int>(i / static_cast<std::size_t>(w));
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
        if (cls[j] == kWeak) {
          cls[j] = kStrong;
          stack.push_back(j);
        }
      }
    }
  }
  return edges;
}

double edge_fraction(const RgbImage& raster, double canny_low, double canny_high) {
  if (raster.empty()) return 0.0;
  const auto edges = canny(luminance(raster), raster.width(), raster.height(), canny_low, canny_high);
  const auto count = std::count(edges.begin(), edges.end(), std::uint8_t{1});
  return static_cast<double>(count) / static_cast<double>(edges.size());
}

double edge_fraction(const Tile& tile, double canny_low, double canny_high) {
  return edge_fraction(tile.pixels, canny_low, canny_high);
}

std::vector<Tile> tessellate(const SlideImage& slide, const TessellationConfig& cfg) {
  cfg.validate();
  const SlideImage scaled = rescale(slide, cfg.target_mpp);
  std::vector<Tile> tiles;
  for (const TileSpec& spec : plan_grid(scaled, cfg)) {
    RgbImage raster = scaled.pixels.crop(spec.x_px, spec.y_px, spec.size_px, spec.size_px);
    if (edge_fraction(raster, cfg.canny_low, cfg.canny_high) < cfg.min_edge_fraction) continue;
    if (cfg.downsample_to_px) {
      raster = resize_bilinear(raster, *cfg.downsample_to_px, *cfg.downsample_to_px);
    }
    tiles.push_back({spec, std::move(raster)});
  }
  return tiles;
}

}  // namespace eagle
