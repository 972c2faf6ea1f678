#include <httplib.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "eagle/encoders.hpp"
#include "eagle/error.hpp"

namespace eagle {

ExternalEncoder::ExternalEncoder(EncoderSpec spec, EncoderEndpoint endpoint)
    : spec_(std::move(spec)), endpoint_(std::move(endpoint)) {
  if (endpoint_.batch_size == 0) {
    throw Error(ErrorCode::kInvalidArgument, "batch_size must be positive");
  }
}

std::vector<std::vector<float>> ExternalEncoder::post_batch(std::span<const Tile> batch) {
  nlohmann::json body = {{"encoder", spec_.name}, {"tile_px", spec_.tile_px}};
  auto& tiles = body["tiles"] = nlohmann::json::array();
  for (const Tile& t : batch) tiles.push_back(base64_encode(encode_png(t.pixels)));
  const std::string payload = body.dump();

  httplib::Client client(endpoint_.host, endpoint_.port);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  // One retry on transport failure or 5xx, then give up.
  httplib::Result res;
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    ++requests_;
    res = client.Post(endpoint_.path, payload, "application/json");
    if (res && res->status < 500) break;
    last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
  }
  if (!res || res->status >= 500) {
    throw Error(ErrorCode::kEndpointUnavailable,
                endpoint_.host + ":" + std::to_string(endpoint_.port) + " " + last_error);
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kProtocolError, "encoder replied HTTP " + std::to_string(res->status));
  }

  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kProtocolError, std::string("malformed reply: ") + e.what());
  }
  if (!reply.is_object() || !reply.contains("dim") || !reply.contains("rows") ||
      !reply["dim"].is_number_integer() || !reply["rows"].is_array()) {
    throw Error(ErrorCode::kProtocolError, "reply must be {dim, rows}");
  }
  const auto dim = reply["dim"].get<std::size_t>();
  if (dim != spec_.dim) {
    throw Error(ErrorCode::kDimMismatch, "encoder returned dim " + std::to_string(dim) +
                                             ", expected " + std::to_string(spec_.dim));
  }
  const auto& rows = reply["rows"];
  if (rows.size() != batch.size()) {
    throw Error(ErrorCode::kProtocolError, "reply has " + std::to_string(rows.size()) +
                                               " rows for " + std::to_string(batch.size()) + " tiles");
  }
  std::vector<std::vector<float>> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    if (!r.is_array()) throw Error(ErrorCode::kProtocolError, "row is not an array");
    if (r.size() != dim) throw Error(ErrorCode::kDimMismatch, "row width differs from declared dim");
    std::vector<float> v;
    v.reserve(dim);
    for (const auto& x : r) {
      if (!x.is_number()) throw Error(ErrorCode::kProtocolError, "non-numeric row entry");
      const float f = x.get<float>();
      if (!std::isfinite(f)) throw Error(ErrorCode::kProtocolError, "non-finite row entry");
      v.push_back(f);
    }
    out.push_back(std::move(v));
  }
  return out;
}

EmbeddingMatrix ExternalEncoder::encode(const std::string& slide_id, std::span<const Tile> tiles) {
  if (tiles.empty()) throw Error(ErrorCode::kEmptyInput, "no tiles to encode");
  EmbeddingMatrix m(slide_id, spec_.name, spec_.dim);
  m.reserve(tiles.size());
  for (std::size_t start = 0; start < tiles.size(); start += endpoint_.batch_size) {
    const auto batch = tiles.subspan(start, std::min(endpoint_.batch_size, tiles.size() - start));
    const auto rows = post_batch(batch);
    for (std::size_t i = 0; i < rows.size(); ++i) m.append(rows[i], batch[i].spec);
  }
  return m;
}

EmbeddingMatrix external_encode(const EncoderEndpoint& endpoint, const EncoderSpec& spec,
                                std::span<const Tile> tiles, const std::string& slide_id) {
  ExternalEncoder enc(spec, endpoint);
  return enc.encode(slide_id, tiles);
}

}  // namespace eagle
