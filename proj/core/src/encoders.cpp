#include "eagle/encoders.hpp"

#include <boost/beast/core/detail/base64.hpp>

#include <cmath>
#include <random>
#include <string_view>

#include "eagle/error.hpp"

namespace eagle {

EncoderSpec default_scout_spec() { return {"scout", 768, 224, 8.78e11}; }
EncoderSpec default_detail_spec() { return {"detail", 1280, 224, 2.31e13}; }

namespace {

constexpr std::size_t kColorFeatures = 8;

std::uint64_t mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::array<double, kColorFeatures> color_moments(const RgbImage& img) {
  std::array<double, 4> sum{}, sq{};
  const auto bytes = img.bytes();
  const std::size_t n = bytes.size() / 3;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = bytes[3 * i] / 255.0, g = bytes[3 * i + 1] / 255.0, b = bytes[3 * i + 2] / 255.0;
    const double l = 0.299 * r + 0.587 * g + 0.114 * b;
    const double v[4] = {r, g, b, l};
    for (int c = 0; c < 4; ++c) {
      sum[static_cast<std::size_t>(c)] += v[c];
      sq[static_cast<std::size_t>(c)] += v[c] * v[c];
    }
  }
  std::array<double, kColorFeatures> out{};
  const double dn = n == 0 ? 1.0 : static_cast<double>(n);
  for (std::size_t c = 0; c < 4; ++c) {
    const double mean = sum[c] / dn;
    const double var = std::max(0.0, sq[c] / dn - mean * mean);
    out[c] = mean;
    // std of a [0,1] signal is at most 0.5
    out[4 + c] = 2.0 * std::sqrt(var);
  }
  // order: mean r,g,b, std r,g,b, luma mean, luma std
  return {out[0], out[1], out[2], out[4], out[5], out[6], out[3], out[7]};
}

}  // namespace

SyntheticEncoder::SyntheticEncoder(EncoderSpec spec, std::uint64_t seed, float color_weight)
    : spec_(std::move(spec)), seed_(seed), color_weight_(color_weight) {
  if (spec_.dim == 0) throw Error(ErrorCode::kInvalidArgument, "encoder dim must be >= 1");
}

std::vector<float> SyntheticEncoder::embed(const RgbImage& pixels) const {
  const auto bytes = pixels.bytes();
  const std::uint64_t h = std::hash<std::string_view>{}(
      std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  std::mt19937_64 rng(mix(h ^ mix(seed_)));
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t n_color = std::min(kColorFeatures, spec_.dim);
  const std::size_t n_rand = spec_.dim - n_color;
  std::vector<double> v(spec_.dim);
  const double rand_scale = n_rand == 0 ? 0.0 : 1.0 / std::sqrt(static_cast<double>(n_rand));
  for (std::size_t i = 0; i < n_rand; ++i) v[i] = normal(rng) * rand_scale;
  const auto moments = color_moments(pixels);
  for (std::size_t i = 0; i < n_color; ++i) v[n_rand + i] = color_weight_ * moments[i];

  double norm = 0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  std::vector<float> out(spec_.dim);
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<float>(norm > 0 ? v[i] / norm : 0.0);
  }
  return out;
}

EmbeddingMatrix SyntheticEncoder::encode(const std::string& slide_id, std::span<const Tile> tiles) {
  if (tiles.empty()) throw Error(ErrorCode::kEmptyInput, "no tiles to encode");
  EmbeddingMatrix m(slide_id, spec_.name, spec_.dim);
  m.reserve(tiles.size());
  for (const Tile& t : tiles) m.append(embed(t.pixels), t.spec);
  return m;
}

EmbeddingMatrix synthetic_encode(std::uint64_t seed, const EncoderSpec& spec,
                                 std::span<const Tile> tiles, const std::string& slide_id) {
  SyntheticEncoder enc(spec, seed);
  return enc.encode(slide_id, tiles);
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  namespace b64 = boost::beast::detail::base64;
  std::vector<std::uint8_t> out(b64::decoded_size(text.size()));
  const auto [written, read] = b64::decode(out.data(), text.data(), text.size());
  std::size_t body = text.size();
  for (int pad = 0; pad < 2 && body > 0 && text[body - 1] == '='; ++pad) --body;
  if (read < body) throw Error(ErrorCode::kProtocolError, "invalid base64 payload");
  out.resize(written);
  return out;
}

}  // namespace eagle
