#include <gtest/gtest.h>

#include <random>

#include "eagle/error.hpp"
#include "eagle/image.hpp"
#include "oracles.hpp"

using eagle::RgbImage;

namespace {

RgbImage noise_image(int w, int h, unsigned seed) {
  RgbImage img(w, h);
  std::mt19937 rng(seed);
  for (auto& b : img.bytes()) b = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

}  // namespace

TEST(Image, CropCopiesWindow) {
  const auto img = noise_image(20, 10, 1);
  const auto c = img.crop(3, 2, 5, 4);
  ASSERT_EQ(c.width(), 5);
  ASSERT_EQ(c.height(), 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 5; ++x) {
      for (int ch = 0; ch < 3; ++ch) EXPECT_EQ(c.pixel(x, y)[ch], img.pixel(x + 3, y + 2)[ch]);
    }
  }
}

TEST(Image, CropOutsideThrows) {
  const RgbImage img(8, 8);
  EXPECT_THROW((void)img.crop(4, 4, 5, 2), eagle::Error);
  EXPECT_THROW((void)img.crop(-1, 0, 2, 2), eagle::Error);
}

TEST(Image, ResizeKeepsConstantField) {
  RgbImage img(37, 23);
  for (int y = 0; y < 23; ++y)
    for (int x = 0; x < 37; ++x) img.set(x, y, 200, 17, 99);
  const auto r = eagle::resize_bilinear(img, 11, 64);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 11; ++x) {
      EXPECT_EQ(r.pixel(x, y)[0], 200);
      EXPECT_EQ(r.pixel(x, y)[1], 17);
      EXPECT_EQ(r.pixel(x, y)[2], 99);
    }
  }
}

TEST(Image, HalvingAveragesPixelPairs) {
  // pixel-center alignment: output pixel i samples input position 2i + 0.5
  RgbImage img(4, 1);
  img.set(0, 0, 0, 0, 0);
  img.set(1, 0, 100, 100, 100);
  img.set(2, 0, 40, 40, 40);
  img.set(3, 0, 60, 60, 60);
  const auto r = eagle::resize_bilinear(img, 2, 1);
  EXPECT_EQ(r.pixel(0, 0)[0], 50);
  EXPECT_EQ(r.pixel(1, 0)[0], 50);
}

TEST(Image, LuminanceUsesRec601) {
  RgbImage img(2, 1);
  img.set(0, 0, 255, 0, 0);
  img.set(1, 0, 10, 20, 30);
  const auto l = eagle::luminance(img);
  ASSERT_EQ(l.size(), 2u);
  EXPECT_NEAR(l[0], 0.299 * 255, 1e-3);
  EXPECT_NEAR(l[1], 0.299 * 10 + 0.587 * 20 + 0.114 * 30, 1e-3);
}

TEST(Image, PngRoundTrip) {
  const auto img = noise_image(31, 17, 7);
  EXPECT_EQ(eagle::decode_png(eagle::encode_png(img)), img);
  const auto dir = oracle::temp_dir("png");
  eagle::write_png(img, dir / "a.png");
  EXPECT_EQ(eagle::read_png(dir / "a.png"), img);
  EXPECT_EQ(eagle::read_image(dir / "a.png"), img);
  std::filesystem::remove_all(dir);
}

TEST(Image, DecodeGarbageThrows) {
  const std::vector<std::uint8_t> junk = {1, 2, 3, 4, 5};
  EXPECT_THROW((void)eagle::decode_png(junk), eagle::Error);
  EXPECT_THROW((void)eagle::read_png("/nonexistent/x.png"), eagle::Error);
}
