#include <gtest/gtest.h>

#include <random>

#include "eagle/error.hpp"
#include "eagle/synthetic.hpp"
#include "eagle/tessellation.hpp"

#ifdef EAGLE_HAVE_OPENCV
#include <opencv2/imgproc.hpp>
#endif

using namespace eagle;

namespace {

SlideImage blank_slide(int w, int h, double mpp, std::uint8_t v = 240) {
  return {"s", RgbImage(w, h, v), mpp, "c"};
}

RgbImage textured(int w, int h, unsigned seed) {
  RgbImage img(w, h, 235);
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> px(0, w - 1), py(0, h - 1), rad(2, 5);
  for (int n = 0; n < w * h / 60; ++n) {
    const int cx = px(rng), cy = py(rng), r = rad(rng);
    for (int y = std::max(0, cy - r); y < std::min(h, cy + r + 1); ++y)
      for (int x = std::max(0, cx - r); x < std::min(w, cx + r + 1); ++x)
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) img.set(x, y, 60, 30, 110);
  }
  return img;
}

}  // namespace

TEST(Tessellation, GridDropsPartialCells) {
  TessellationConfig cfg;
  cfg.tile_px = 100;
  const auto specs = plan_grid(blank_slide(350, 220, 2.0), cfg);
  ASSERT_EQ(specs.size(), 6u);
  EXPECT_EQ(specs[0], (TileSpec{0, 0, 100, 2.0}));
  EXPECT_EQ(specs[2], (TileSpec{200, 0, 100, 2.0}));
  EXPECT_EQ(specs[3], (TileSpec{0, 100, 100, 2.0}));
  EXPECT_EQ(specs[5], (TileSpec{200, 100, 100, 2.0}));
  for (std::size_t i = 1; i < specs.size(); ++i) EXPECT_TRUE(row_major_less(specs[i - 1], specs[i]));
}

TEST(Tessellation, RescaleHalvesAndRefusesUpsampling) {
  const auto s = blank_slide(400, 300, 0.5);
  const auto r = rescale(s, 1.0);
  EXPECT_EQ(r.width_px(), 200);
  EXPECT_EQ(r.height_px(), 150);
  EXPECT_DOUBLE_EQ(r.mpp, 1.0);
  try {
    (void)rescale(s, 0.25);
    FAIL() << "expected UpsamplingRequested";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUpsamplingRequested);
  }
}

TEST(Tessellation, ConfigValidation) {
  TessellationConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.canny_low = 120;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.tile_px = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.min_edge_fraction = 1.5;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Tessellation, CannyFlatImageHasNoEdges) {
  std::vector<float> flat(64 * 64, 128.0f);
  const auto e = canny(flat, 64, 64, 40, 100);
  EXPECT_EQ(std::count(e.begin(), e.end(), 1), 0);
}

TEST(Tessellation, CannyStepGivesThinVerticalLine) {
  const int w = 40, h = 30;
  std::vector<float> img(w * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img[y * w + x] = x < 20 ? 20.0f : 220.0f;
  const auto e = canny(img, w, h, 40, 100);
  for (int y = 0; y < h; ++y) {
    int count = 0, col = -1;
    for (int x = 0; x < w; ++x) {
      if (e[y * w + x]) {
        ++count;
        col = x;
      }
    }
    EXPECT_EQ(count, 1) << "row " << y;
    EXPECT_TRUE(col == 19 || col == 20) << "row " << y;
  }
}

TEST(Tessellation, HysteresisKeepsOnlyConnectedWeakPixels) {
  // vertical step whose contrast fades from strong (top) to weak (bottom)
  const int w = 40, h = 40;
  std::vector<float> img(w * h, 100.0f);
  for (int y = 0; y < h; ++y)
    for (int x = 20; x < w; ++x) img[y * w + x] = 100.0f + 160.0f - 130.0f * y / (h - 1);
  const auto e = canny(img, w, h, 40, 100);
  for (int y = 0; y < h; ++y) {
    int row = 0;
    for (int x = 15; x < 25; ++x) row += e[y * w + x];
    EXPECT_EQ(row, 1) << "row " << y;
  }

  std::vector<float> weak_only(w * h, 100.0f);
  for (int y = 0; y < h; ++y)
    for (int x = 20; x < w; ++x) weak_only[y * w + x] = 130.0f;
  const auto e2 = canny(weak_only, w, h, 40, 100);
  EXPECT_EQ(std::count(e2.begin(), e2.end(), 1), 0);
  const auto e3 = canny(weak_only, w, h, 40, 60);
  EXPECT_EQ(std::count(e3.begin(), e3.end(), 1), h);
}

TEST(Tessellation, BlankTilesAreFiltered) {
  SlideImage s{"s", RgbImage(128, 128, 245), 1.0, "c"};
  const auto tex = textured(64, 64, 3);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const auto* p = tex.pixel(x, y);
      s.pixels.set(x + 64, y + 64, p[0], p[1], p[2]);
    }
  TessellationConfig cfg;
  cfg.tile_px = 64;
  cfg.target_mpp = 1.0;
  const auto tiles = tessellate(s, cfg);
  ASSERT_EQ(tiles.size(), 1u);
  EXPECT_EQ(tiles[0].spec, (TileSpec{64, 64, 64, 1.0}));
  EXPECT_EQ(tiles[0].pixels, tex);
}

TEST(Tessellation, DownsampleAfterFilter) {
  SlideImage s{"s", textured(128, 64, 5), 1.0, "c"};
  TessellationConfig cfg;
  cfg.tile_px = 64;
  cfg.target_mpp = 1.0;
  cfg.downsample_to_px = 16;
  const auto tiles = tessellate(s, cfg);
  ASSERT_EQ(tiles.size(), 2u);
  EXPECT_EQ(tiles[0].pixels.width(), 16);
  EXPECT_EQ(tiles[0].spec.size_px, 64);
}

TEST(Tessellation, SyntheticSlidesKeepAllTissueTiles) {
  const auto s = make_synthetic_slide("x", 1, 42);
  TessellationConfig cfg;
  cfg.tile_px = 32;
  cfg.target_mpp = 2.0;
  const auto tiles = tessellate(s.slide, cfg);
  EXPECT_EQ(tiles.size(), 256u);
  EXPECT_EQ(s.planted.size(), 26u);
  std::size_t planted = 0;
  for (const auto& t : tiles) planted += is_planted(s, t.spec, 1.0, 64) ? 1 : 0;
  EXPECT_EQ(planted, 26u);
}

#ifdef EAGLE_HAVE_OPENCV
namespace {

// OpenCV edge map from the same blur and Sobel stages, with gradients scaled
// by 8 before int16 conversion.
std::vector<std::uint8_t> opencv_canny(const std::vector<float>& gray, int w, int h, double low, double high) {
  cv::Mat src(h, w, CV_32F, const_cast<float*>(gray.data()));
  cv::Mat blurred, dx, dy, dx16, dy16, edges;
  cv::GaussianBlur(src, blurred, cv::Size(5, 5), 1.4, 1.4, cv::BORDER_REPLICATE);
  cv::Sobel(blurred, dx, CV_32F, 1, 0, 3, 1, 0, cv::BORDER_REPLICATE);
  cv::Sobel(blurred, dy, CV_32F, 0, 1, 3, 1, 0, cv::BORDER_REPLICATE);
  constexpr double kScale = 8.0;
  dx.convertTo(dx16, CV_16S, kScale);
  dy.convertTo(dy16, CV_16S, kScale);
  cv::Canny(dx16, dy16, edges, low * kScale, high * kScale, true);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out[y * w + x] = edges.at<std::uint8_t>(y, x) ? 1 : 0;
  return out;
}

// Share of set pixels in `a` with a set pixel of `b` within one pixel.
double covered(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b, int w, int h) {
  int total = 0, hit = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!a[y * w + x]) continue;
      ++total;
      bool found = false;
      for (int dy = -1; dy <= 1 && !found; ++dy)
        for (int dx = -1; dx <= 1 && !found; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx >= 0 && ny >= 0 && nx < w && ny < h && b[ny * w + nx]) found = true;
        }
      hit += found;
    }
  }
  return total ? static_cast<double>(hit) / total : 1.0;
}

}  // namespace

TEST(Tessellation, CannyAgreesWithOpenCV) {
  for (unsigned seed = 0; seed < 6; ++seed) {
    const auto img = seed < 3 ? textured(96, 96, seed) : make_synthetic_slide("o", seed & 1, seed).slide.pixels.crop(0, 0, 128, 128);
    const auto gray = luminance(img);
    const int w = img.width(), h = img.height();
    const auto ours = canny(gray, w, h, 40, 100);
    const auto ref = opencv_canny(gray, w, h, 40, 100);
    const double n_ours = static_cast<double>(std::count(ours.begin(), ours.end(), 1));
    const double n_ref = static_cast<double>(std::count(ref.begin(), ref.end(), 1));
    ASSERT_GT(n_ref, 0);
    EXPECT_NEAR(n_ours / n_ref, 1.0, 0.05) << "seed " << seed;
    EXPECT_GT(covered(ours, ref, w, h), 0.97) << "seed " << seed;
    EXPECT_GT(covered(ref, ours, w, h), 0.97) << "seed " << seed;
  }
}
#endif
