#include "eagle/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "eagle/error.hpp"

namespace eagle {

static_assert(std::endian::native == std::endian::little,
              "embedding files are written as little-endian; add byte swapping for this target");

void EmbeddingMatrix::append(std::span<const float> r, const TileSpec& coord) {
  if (r.size() != dim_) {
    throw Error(ErrorCode::kDimMismatch, "row of width " + std::to_string(r.size()) +
                                             " appended to matrix of dim " + std::to_string(dim_));
  }
  values_.insert(values_.end(), r.begin(), r.end());
  coords_.push_back(coord);
}

void EmbeddingMatrix::reserve(std::size_t n) {
  values_.reserve(n * dim_);
  coords_.reserve(n);
}

EmbeddingMatrix EmbeddingMatrix::select(std::span<const std::size_t> indices) const {
  EmbeddingMatrix out(slide_id_, encoder_, dim_);
  out.metadata_ = metadata_;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= rows()) throw Error(ErrorCode::kInvalidArgument, "row index out of range");
    out.append(row(i), coords_[i]);
  }
  return out;
}

void EmbeddingMatrix::validate() const {
  if (values_.size() != coords_.size() * dim_) {
    throw Error(ErrorCode::kShapeMismatch, "value buffer does not match rows x dim");
  }
  for (float v : values_) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "non-finite embedding value");
  }
}

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  template <typename T>
  T get() {
    T v;
    take(&v, sizeof(T));
    return v;
  }
  void take(void* dst, std::size_t n) {
    if (n > bytes_.size() - pos_) throw Error(ErrorCode::kTruncatedFile, "unexpected end of data");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

constexpr std::uint8_t kDtypeF32 = 1;

}  // namespace

std::vector<std::uint8_t> serialize_container(const EmbeddingContainer& c) {
  if (c.values.size() != c.count * c.dim) {
    throw Error(ErrorCode::kShapeMismatch, "container values do not match count x dim");
  }
  std::vector<std::uint8_t> out;
  out.reserve(33 + c.values.size() * 4 + c.trailer_json.size());
  out.insert(out.end(), std::begin(kEmbeddingMagic), std::end(kEmbeddingMagic));
  put(out, kEmbeddingVersion);
  put(out, c.dim);
  put(out, c.count);
  put(out, kDtypeF32);
  const auto* p = reinterpret_cast<const std::uint8_t*>(c.values.data());
  out.insert(out.end(), p, p + c.values.size() * sizeof(float));
  put(out, static_cast<std::uint64_t>(c.trailer_json.size()));
  out.insert(out.end(), c.trailer_json.begin(), c.trailer_json.end());
  return out;
}

EmbeddingContainer parse_container(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[8];
  if (bytes.size() < sizeof(magic)) throw Error(ErrorCode::kTruncatedFile, "header too short");
  r.take(magic, sizeof(magic));
  if (std::memcmp(magic, kEmbeddingMagic, sizeof(magic)) != 0) {
    throw Error(ErrorCode::kBadMagic, "not an EAGLEMB1 file");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kEmbeddingVersion) {
    throw Error(ErrorCode::kVersionUnsupported, "version " + std::to_string(version));
  }
  EmbeddingContainer c;
  c.dim = r.get<std::uint32_t>();
  c.count = r.get<std::uint64_t>();
  const auto dtype = r.get<std::uint8_t>();
  if (dtype != kDtypeF32) {
    throw Error(ErrorCode::kVersionUnsupported, "dtype " + std::to_string(dtype));
  }
  const std::uint64_t n = c.count * c.dim;
  if (c.dim != 0 && (n / c.dim != c.count || n > r.remaining() / sizeof(float))) {
    throw Error(ErrorCode::kTruncatedFile, "payload shorter than header declares");
  }
  c.values.resize(n);
  r.take(c.values.data(), n * sizeof(float));
  const auto len = r.get<std::uint64_t>();
  if (len > r.remaining()) throw Error(ErrorCode::kTruncatedFile, "trailer truncated");
  c.trailer_json.resize(len);
  r.take(c.trailer_json.data(), len);
  return c;
}

void write_container(const EmbeddingContainer& c, const std::filesystem::path& path) {
  const auto bytes = serialize_container(c);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write to a sibling temp file and rename, so readers never see a partial file.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot open " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::kIoError, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

EmbeddingContainer read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_container(bytes);
}

void cache_write(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  m.validate();
  nlohmann::json coords = nlohmann::json::array();
  for (const auto& c : m.coords()) coords.push_back({c.x_px, c.y_px, c.size_px, c.mpp});
  nlohmann::json trailer = {{"slide_id", m.slide_id()}, {"encoder", m.encoder()}, {"coords", coords}};
  if (!m.metadata().empty()) trailer["metadata"] = m.metadata();

  EmbeddingContainer c;
  c.dim = static_cast<std::uint32_t>(m.dim());
  c.count = m.rows();
  c.values.assign(m.values().begin(), m.values().end());
  c.trailer_json = trailer.dump();
  write_container(c, path);
}

EmbeddingMatrix cache_read(const std::filesystem::path& path) {
  auto c = read_container(path);
  nlohmann::json trailer;
  try {
    trailer = nlohmann::json::parse(c.trailer_json);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("embedding trailer: ") + e.what());
  }
  EmbeddingMatrix m(trailer.value("slide_id", ""), trailer.value("encoder", ""), c.dim);
  const auto& coords = trailer.at("coords");
  if (coords.size() != c.count) {
    throw Error(ErrorCode::kShapeMismatch, "coords count does not match row count");
  }
  m.reserve(c.count);
  for (std::size_t i = 0; i < c.count; ++i) {
    const auto& e = coords[i];
    TileSpec spec{e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<int>(), e.at(3).get<double>()};
    m.append(std::span<const float>(c.values.data() + i * c.dim, c.dim), spec);
  }
  if (trailer.contains("metadata")) {
    m.metadata() = trailer["metadata"].get<std::map<std::string, std::string>>();
  }
  return m;
}

void EmbeddingTable::append(std::string id, std::span<const float> v, std::map<std::string, std::string> meta) {
  if (ids.empty() && dim == 0) dim = v.size();
  if (v.size() != dim) {
    throw Error(ErrorCode::kDimMismatch,
                "table row has dim " + std::to_string(v.size()) + ", expected " + std::to_string(dim));
  }
  ids.push_back(std::move(id));
  values.insert(values.end(), v.begin(), v.end());
  metadata.push_back(std::move(meta));
}

std::size_t EmbeddingTable::find(const std::string& id) const {
  const auto it = std::find(ids.begin(), ids.end(), id);
  return static_cast<std::size_t>(it - ids.begin());
}

void write_table(const EmbeddingTable& t, const std::filesystem::path& path) {
  if (t.values.size() != t.ids.size() * t.dim || t.metadata.size() != t.ids.size()) {
    throw Error(ErrorCode::kShapeMismatch, "embedding table is inconsistent");
  }
  nlohmann::json trailer = {{"kind", t.kind}, {"encoder", t.encoder}, {"ids", t.ids}, {"metadata", t.metadata}};
  EmbeddingContainer c;
  c.dim = static_cast<std::uint32_t>(t.dim);
  c.count = t.ids.size();
  c.values = t.values;
  c.trailer_json = trailer.dump();
  write_container(c, path);
}

EmbeddingTable read_table(const std::filesystem::path& path) {
  auto c = read_container(path);
  EmbeddingTable t;
  try {
    const auto trailer = nlohmann::json::parse(c.trailer_json);
    t.kind = trailer.value("kind", "");
    t.encoder = trailer.value("encoder", "");
    t.ids = trailer.at("ids").get<std::vector<std::string>>();
    if (trailer.contains("metadata")) {
      t.metadata = trailer["metadata"].get<std::vector<std::map<std::string, std::string>>>();
    } else {
      t.metadata.resize(t.ids.size());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("embedding table trailer: ") + e.what());
  }
  if (t.ids.size() != c.count || t.metadata.size() != c.count) {
    throw Error(ErrorCode::kShapeMismatch, "table ids do not match row count");
  }
  t.dim = c.dim;
  t.values = std::move(c.values);
  return t;
}

}  // namespace eagle
