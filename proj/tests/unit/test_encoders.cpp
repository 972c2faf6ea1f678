#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <mutex>
#include <nlohmann/json.hpp>
#include <random>
#include <thread>

#include "eagle/encoders.hpp"
#include "eagle/error.hpp"

// keep after Eigen: <resolv.h> defines a _res macro
#include <httplib.h>

using namespace eagle;

namespace {

std::vector<Tile> random_tiles(std::size_t n, int px, unsigned seed) {
  std::mt19937 rng(seed);
  std::vector<Tile> tiles;
  for (std::size_t i = 0; i < n; ++i) {
    RgbImage img(px, px);
    for (auto& b : img.bytes()) b = static_cast<std::uint8_t>(rng() & 0xff);
    tiles.push_back({{static_cast<int>(i) * px, 0, px, 2.0}, std::move(img)});
  }
  return tiles;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no eagle::Error thrown";
  return ErrorCode::kInvalidArgument;
}

// Mock encoder: each row is [mean R, mean G, mean B, index in batch] of the
// decoded tile, padded to `dim`.
class MockServer {
public:
  std::size_t reply_dim = 4;
  std::atomic<int> fail_first{0};
  std::atomic<int> status_override{0};
  std::atomic<bool> drop_row{false};
  std::vector<std::size_t> batch_sizes;
  std::mutex mu;

  MockServer() {
    server_.Post("/encode", [this](const httplib::Request& req, httplib::Response& res) {
      if (fail_first > 0) {
        --fail_first;
        res.status = 503;
        return;
      }
      if (status_override != 0) {
        res.status = status_override;
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      nlohmann::json rows = nlohmann::json::array();
      std::size_t i = 0;
      for (const auto& t : body["tiles"]) {
        const auto img = decode_png(base64_decode(t.get<std::string>()));
        double sum[3] = {0, 0, 0};
        for (int y = 0; y < img.height(); ++y)
          for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < 3; ++c) sum[c] += img.pixel(x, y)[c];
        const double n = static_cast<double>(img.width()) * img.height();
        std::vector<float> row(reply_dim, 0.0f);
        row[0] = static_cast<float>(sum[0] / n);
        row[1] = static_cast<float>(sum[1] / n);
        row[2] = static_cast<float>(sum[2] / n);
        row[3] = static_cast<float>(i++);
        rows.push_back(row);
      }
      if (drop_row) rows.erase(rows.size() - 1);
      {
        std::lock_guard lock(mu);
        batch_sizes.push_back(body["tiles"].size());
      }
      res.set_content(nlohmann::json{{"dim", reply_dim}, {"rows", rows}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    thread_.join();
  }
  int port() const { return port_; }

private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

EncoderEndpoint endpoint_for(const MockServer& s) {
  EncoderEndpoint e;
  e.port = s.port();
  e.timeout = std::chrono::milliseconds(5000);
  return e;
}

}  // namespace

TEST(SyntheticEncoder, DeterministicAndNormalized) {
  const auto tiles = random_tiles(5, 16, 1);
  EncoderSpec spec{"scout", 64, 16, 0};
  SyntheticEncoder a(spec, 7), b(spec, 7), c(spec, 8);
  const auto ma = a.encode("s", tiles);
  EXPECT_EQ(ma, b.encode("s", tiles));
  EXPECT_NE(ma.values()[0], c.encode("s", tiles).values()[0]);
  ASSERT_EQ(ma.rows(), 5u);
  ASSERT_EQ(ma.dim(), 64u);
  for (std::size_t i = 0; i < ma.rows(); ++i) {
    double n = 0;
    for (float v : ma.row(i)) n += double(v) * v;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-5);
    EXPECT_EQ(ma.coords()[i], tiles[i].spec);
  }
}

TEST(SyntheticEncoder, RowDependsOnlyOnPixels) {
  auto tiles = random_tiles(2, 16, 2);
  tiles[1].pixels = tiles[0].pixels;
  const auto m = synthetic_encode(3, {"e", 32, 16, 0}, tiles);
  for (std::size_t j = 0; j < 32; ++j) EXPECT_EQ(m.row(0)[j], m.row(1)[j]);
}

TEST(SyntheticEncoder, EmptyInputThrows) {
  SyntheticEncoder enc({"e", 8, 16, 0}, 0);
  EXPECT_EQ(code_of([&] { (void)enc.encode("s", {}); }), ErrorCode::kEmptyInput);
}

TEST(SyntheticEncoder, CountingWrapper) {
  auto inner = std::make_shared<SyntheticEncoder>(EncoderSpec{"e", 16, 8, 0}, 0);
  CountingEncoder counting(inner);
  const auto tiles = random_tiles(3, 8, 4);
  (void)counting.encode("a", tiles);
  (void)counting.encode("b", std::span(tiles).first(1));
  EXPECT_EQ(counting.calls(), 2u);
  EXPECT_EQ(counting.tiles(), 4u);
}

TEST(Base64, RoundTripAndKnownVector) {
  const std::string text = "foobar";
  const std::vector<std::uint8_t> bytes(text.begin(), text.end());
  EXPECT_EQ(base64_encode(bytes), "Zm9vYmFy");
  EXPECT_EQ(base64_encode(std::span(bytes).first(4)), "Zm9vYg==");
  EXPECT_EQ(base64_decode("Zm9vYg=="), std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 4));
}

TEST(ExternalEncoder, BatchesAndKeepsOrder) {
  MockServer server;
  const auto tiles = random_tiles(130, 8, 5);
  ExternalEncoder enc({"remote", 4, 8, 0}, endpoint_for(server));
  const auto m = enc.encode("slide", tiles);
  EXPECT_EQ(enc.requests_sent(), 3u);
  EXPECT_EQ(server.batch_sizes, (std::vector<std::size_t>{64, 64, 2}));
  ASSERT_EQ(m.rows(), 130u);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    double r = 0;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) r += tiles[i].pixels.pixel(x, y)[0];
    EXPECT_NEAR(m.row(i)[0], r / 64.0, 1e-3);
    EXPECT_EQ(m.row(i)[3], static_cast<float>(i % 64));
    EXPECT_EQ(m.coords()[i], tiles[i].spec);
  }
}

TEST(ExternalEncoder, DimMismatchIsReported) {
  MockServer server;
  server.reply_dim = 6;
  ExternalEncoder enc({"remote", 4, 8, 0}, endpoint_for(server));
  const auto tiles = random_tiles(2, 8, 6);
  EXPECT_EQ(code_of([&] { (void)enc.encode("s", tiles); }), ErrorCode::kDimMismatch);
}

TEST(ExternalEncoder, RetriesOnceOnServerError) {
  MockServer server;
  server.fail_first = 1;
  ExternalEncoder enc({"remote", 4, 8, 0}, endpoint_for(server));
  const auto tiles = random_tiles(3, 8, 7);
  EXPECT_EQ(enc.encode("s", tiles).rows(), 3u);
  EXPECT_EQ(enc.requests_sent(), 2u);

  server.fail_first = 2;
  ExternalEncoder again({"remote", 4, 8, 0}, endpoint_for(server));
  EXPECT_EQ(code_of([&] { (void)again.encode("s", tiles); }), ErrorCode::kEndpointUnavailable);
  EXPECT_EQ(again.requests_sent(), 2u);
}

TEST(ExternalEncoder, ProtocolErrors) {
  MockServer server;
  const auto tiles = random_tiles(3, 8, 8);
  server.status_override = 400;
  ExternalEncoder enc({"remote", 4, 8, 0}, endpoint_for(server));
  EXPECT_EQ(code_of([&] { (void)enc.encode("s", tiles); }), ErrorCode::kProtocolError);
  server.status_override = 0;
  server.drop_row = true;
  EXPECT_EQ(code_of([&] { (void)enc.encode("s", tiles); }), ErrorCode::kProtocolError);
}

TEST(ExternalEncoder, UnreachableEndpoint) {
  int port = 0;
  {
    MockServer probe;
    port = probe.port();
  }
  EncoderEndpoint e;
  e.port = port;
  e.timeout = std::chrono::milliseconds(500);
  ExternalEncoder enc({"remote", 4, 8, 0}, e);
  const auto tiles = random_tiles(1, 8, 9);
  EXPECT_EQ(code_of([&] { (void)enc.encode("s", tiles); }), ErrorCode::kEndpointUnavailable);
}
