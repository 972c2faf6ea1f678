#include "eagle/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "eagle/error.hpp"

namespace eagle {

RgbImage::RgbImage(int width, int height, std::uint8_t fill)
    : width_(width), height_(height),
      pixels_(static_cast<std::size_t>(width) * height * 3, fill) {
  if (width < 0 || height < 0) {
    throw Error(ErrorCode::kInvalidArgument, "negative image dimensions");
  }
}

RgbImage::RgbImage(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width < 0 || height < 0 ||
      pixels_.size() != static_cast<std::size_t>(width) * height * 3) {
    throw Error(ErrorCode::kShapeMismatch, "pixel buffer length does not match width*height*3");
  }
}

RgbImage RgbImage::crop(int x, int y, int w, int h) const {
  if (x < 0 || y < 0 || w < 0 || h < 0 || x + w > width_ || y + h > height_) {
    throw Error(ErrorCode::kInvalidArgument, "crop window outside image");
  }
  RgbImage out(w, h);
  const std::size_t row_bytes = static_cast<std::size_t>(w) * 3;
  for (int r = 0; r < h; ++r) {
    std::copy_n(pixel(x, y + r), row_bytes, out.pixel(0, r));
  }
  return out;
}

RgbImage resize_bilinear(const RgbImage& src, int out_width, int out_height) {
  if (out_width <= 0 || out_height <= 0 || src.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "resize to or from an empty raster");
  }
  if (out_width == src.width() && out_height == src.height()) return src;

  const double sx = static_cast<double>(src.width()) / out_width;
  const double sy = static_cast<double>(src.height()) / out_height;

  struct Tap {
    int lo, hi;
    double frac;
  };
  auto taps = [](int n_out, int n_in, double scale) {
    std::vector<Tap> t(static_cast<std::size_t>(n_out));
    for (int i = 0; i < n_out; ++i) {
      double pos = (i + 0.5) * scale - 0.5;
      pos = std::clamp(pos, 0.0, static_cast<double>(n_in - 1));
      const int lo = static_cast<int>(std::floor(pos));
      const int hi = std::min(lo + 1, n_in - 1);
      t[static_cast<std::size_t>(i)] = {lo, hi, pos - lo};
    }
    return t;
  };
  const auto xt = taps(out_width, src.width(), sx);
  const auto yt = taps(out_height, src.height(), sy);

  RgbImage out(out_width, out_height);
  for (int y = 0; y < out_height; ++y) {
    const Tap& ty = yt[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_width; ++x) {
      const Tap& tx = xt[static_cast<std::size_t>(x)];
      const auto* p00 = src.pixel(tx.lo, ty.lo);
      const auto* p01 = src.pixel(tx.hi, ty.lo);
      const auto* p10 = src.pixel(tx.lo, ty.hi);
      const auto* p11 = src.pixel(tx.hi, ty.hi);
      auto* o = out.pixel(x, y);
      for (int c = 0; c < 3; ++c) {
        const double top = p00[c] + (p01[c] - p00[c]) * tx.frac;
        const double bot = p10[c] + (p11[c] - p10[c]) * tx.frac;
        const double v = top + (bot - top) * ty.frac;
        o[c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

std::vector<float> luminance(const RgbImage& img) {
  std::vector<float> out(static_cast<std::size_t>(img.width()) * img.height());
  const auto bytes = img.bytes();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.299f * bytes[3 * i] + 0.587f * bytes[3 * i + 1] + 0.114f * bytes[3 * i + 2];
  }
  return out;
}

namespace {

RgbImage finish_png_read(png_image& image) {
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr) == 0) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::kParseError, "png decode failed: " + msg);
  }
  return RgbImage(static_cast<int>(image.width), static_cast<int>(image.height),
                  std::move(buffer));
}

png_image describe(const RgbImage& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGB;
  return image;
}

}  // namespace

RgbImage read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&image, path.string().c_str()) == 0) {
    throw Error(ErrorCode::kIoError, "cannot read png " + path.string() + ": " + image.message);
  }
  return finish_png_read(image);
}

RgbImage decode_png(std::span<const std::uint8_t> data) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_memory(&image, data.data(), data.size()) == 0) {
    throw Error(ErrorCode::kParseError, std::string("bad png payload: ") + image.message);
  }
  return finish_png_read(image);
}

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  png_image image = describe(img);
  png_alloc_size_t size = 0;
  if (png_image_write_to_memory(&image, nullptr, &size, 0, img.bytes().data(), 0, nullptr) == 0) {
    throw Error(ErrorCode::kIoError, std::string("png encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (png_image_write_to_memory(&image, out.data(), &size, 0, img.bytes().data(), 0, nullptr) ==
      0) {
    throw Error(ErrorCode::kIoError, std::string("png encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

void write_png(const RgbImage& img, const std::filesystem::path& path) {
  const auto data = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

namespace {

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) {
    throw Error(ErrorCode::kParseError, "unsupported ppm header in " + path.string());
  }
  in.get();
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (in.gcount() != static_cast<std::streamsize>(px.size())) {
    throw Error(ErrorCode::kTruncatedFile, path.string());
  }
  return RgbImage(w, h, std::move(px));
}

}  // namespace

RgbImage read_image(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".ppm") return read_ppm(path);
  return read_png(path);
}

}  // namespace eagle
