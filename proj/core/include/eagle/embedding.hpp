#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "eagle/tessellation.hpp"

namespace eagle {

/// N x dim tile-feature matrix (float32, row-major) with one TileSpec per row.
/// This is the unit of exchange between pipeline stages.
class EmbeddingMatrix {
public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::string slide_id, std::string encoder, std::size_t dim)
      : slide_id_(std::move(slide_id)), encoder_(std::move(encoder)), dim_(dim) {}

  const std::string& slide_id() const noexcept { return slide_id_; }
  const std::string& encoder() const noexcept { return encoder_; }
  void set_slide_id(std::string id) { slide_id_ = std::move(id); }
  void set_encoder(std::string name) { encoder_ = std::move(name); }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t rows() const noexcept { return coords_.size(); }
  bool empty() const noexcept { return coords_.empty(); }

  std::span<const float> row(std::size_t i) const noexcept {
    return {values_.data() + i * dim_, dim_};
  }
  std::span<float> row(std::size_t i) noexcept { return {values_.data() + i * dim_, dim_}; }
  std::span<const float> values() const noexcept { return values_; }
  const std::vector<TileSpec>& coords() const noexcept { return coords_; }

  /// Throws DimMismatch when row.size() != dim().
  void append(std::span<const float> row, const TileSpec& coord);
  void reserve(std::size_t n);

  /// Rows at `indices`, in that order.
  EmbeddingMatrix select(std::span<const std::size_t> indices) const;

  /// Free-form string annotations persisted in the file trailer.
  std::map<std::string, std::string>& metadata() noexcept { return metadata_; }
  const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }

  /// Throws InvalidArgument on non-finite entries or inconsistent shapes.
  void validate() const;

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

private:
  std::string slide_id_;
  std::string encoder_;
  std::size_t dim_ = 0;
  std::vector<float> values_;
  std::vector<TileSpec> coords_;
  std::map<std::string, std::string> metadata_;
};

/// Raw "EAGLEMB1" container: fixed header, float32 little-endian payload and
/// a length-prefixed JSON trailer (kept as text here).
struct EmbeddingContainer {
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  std::vector<float> values;
  std::string trailer_json;
};

inline constexpr char kEmbeddingMagic[8] = {'E', 'A', 'G', 'L', 'E', 'M', 'B', '1'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

void write_container(const EmbeddingContainer& c, const std::filesystem::path& path);
EmbeddingContainer read_container(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_container(const EmbeddingContainer& c);
EmbeddingContainer parse_container(std::span<const std::uint8_t> bytes);

void cache_write(const EmbeddingMatrix& m, const std::filesystem::path& path);
EmbeddingMatrix cache_read(const std::filesystem::path& path);

/// One vector per slide or patient, keyed by id. Persisted in the same
/// container with {kind, encoder, ids, metadata} in the trailer.
struct EmbeddingTable {
  std::string kind;  // "slides" or "patients"
  std::string encoder;
  std::size_t dim = 0;
  std::vector<std::string> ids;
  std::vector<float> values;
  std::vector<std::map<std::string, std::string>> metadata;

  std::size_t size() const noexcept { return ids.size(); }
  std::span<const float> row(std::size_t i) const noexcept { return {values.data() + i * dim, dim}; }
  /// Throws DimMismatch.
  void append(std::string id, std::span<const float> v, std::map<std::string, std::string> meta = {});
  /// Row index of `id`, or size() when absent.
  std::size_t find(const std::string& id) const;

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;
};

void write_table(const EmbeddingTable& t, const std::filesystem::path& path);
EmbeddingTable read_table(const std::filesystem::path& path);

}  // namespace eagle
