#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "eagle/embedding.hpp"
#include "eagle/tessellation.hpp"

namespace eagle {

struct EncoderSpec {
  std::string name;
  std::size_t dim = 768;
  int tile_px = 224;
  double flops_per_tile = 0.0;
};

/// Cheap encoder that drives attention scoring.
EncoderSpec default_scout_spec();
/// Expensive encoder applied only to selected tiles.
EncoderSpec default_detail_spec();

class TileEncoder {
public:
  virtual ~TileEncoder() = default;
  virtual const EncoderSpec& spec() const noexcept = 0;
  /// Rows come back in the order of `tiles`. Throws EmptyInput for no tiles.
  virtual EmbeddingMatrix encode(const std::string& slide_id, std::span<const Tile> tiles) = 0;
};

/// Deterministic stand-in for a foundation model. Each row is a pure
/// function of (seed, tile pixel bytes): a hash of the bytes seeds a PRNG that
/// draws dim-8 Gaussians, followed by 8 color moments (per-channel mean and
/// std plus luma mean and std), then the whole row is L2-normalized. The
/// color block lets tiles of similar texture land close together.
class SyntheticEncoder final : public TileEncoder {
public:
  SyntheticEncoder(EncoderSpec spec, std::uint64_t seed, float color_weight = 1.0f);

  const EncoderSpec& spec() const noexcept override { return spec_; }
  EmbeddingMatrix encode(const std::string& slide_id, std::span<const Tile> tiles) override;

  std::vector<float> embed(const RgbImage& pixels) const;

private:
  EncoderSpec spec_;
  std::uint64_t seed_;
  float color_weight_;
};

EmbeddingMatrix synthetic_encode(std::uint64_t seed, const EncoderSpec& spec,
                                 std::span<const Tile> tiles, const std::string& slide_id = "");

struct EncoderEndpoint {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string path = "/encode";
  std::size_t batch_size = 64;
  std::chrono::milliseconds timeout{30000};
};

/// Client for a remote encoder speaking the JSON-over-HTTP tile protocol:
/// POST {encoder, tile_px, tiles: [base64 PNG]} -> {dim, rows}.
class ExternalEncoder final : public TileEncoder {
public:
  ExternalEncoder(EncoderSpec spec, EncoderEndpoint endpoint);

  const EncoderSpec& spec() const noexcept override { return spec_; }
  EmbeddingMatrix encode(const std::string& slide_id, std::span<const Tile> tiles) override;

  std::size_t requests_sent() const noexcept { return requests_.load(); }

private:
  std::vector<std::vector<float>> post_batch(std::span<const Tile> batch);

  EncoderSpec spec_;
  EncoderEndpoint endpoint_;
  std::atomic<std::size_t> requests_{0};
};

EmbeddingMatrix external_encode(const EncoderEndpoint& endpoint, const EncoderSpec& spec,
                                std::span<const Tile> tiles, const std::string& slide_id = "");

/// Wraps another encoder and counts calls and encoded tiles.
class CountingEncoder final : public TileEncoder {
public:
  explicit CountingEncoder(std::shared_ptr<TileEncoder> inner) : inner_(std::move(inner)) {}

  const EncoderSpec& spec() const noexcept override { return inner_->spec(); }
  EmbeddingMatrix encode(const std::string& slide_id, std::span<const Tile> tiles) override {
    ++calls_;
    tiles_ += tiles.size();
    return inner_->encode(slide_id, tiles);
  }

  std::size_t calls() const noexcept { return calls_.load(); }
  std::size_t tiles() const noexcept { return tiles_.load(); }

private:
  std::shared_ptr<TileEncoder> inner_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> tiles_{0};
};

/// Wire helpers shared by the client and test servers.
std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace eagle
