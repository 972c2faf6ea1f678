#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "eagle/attention.hpp"
#include "eagle/error.hpp"
#include "oracles.hpp"

using namespace eagle;

namespace {

EmbeddingMatrix random_matrix(std::size_t rows, std::size_t dim, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> nd;
  EmbeddingMatrix m("s", "e", dim);
  std::vector<float> row(dim);
  for (std::size_t i = 0; i < rows; ++i) {
    for (auto& v : row) v = nd(rng);
    m.append(row, {static_cast<int>(i % 4) * 10, static_cast<int>(i / 4) * 10, 10, 2.0});
  }
  return m;
}

// Direct scalar evaluation of w . (tanh(V h) * sigmoid(U h)).
double logit_oracle(const AttentionHead& head, std::span<const float> h) {
  double s = 0;
  for (std::size_t l = 0; l < head.hidden(); ++l) {
    double v = 0, u = 0;
    for (std::size_t j = 0; j < h.size(); ++j) {
      v += double(head.V(l, j)) * h[j];
      u += double(head.U(l, j)) * h[j];
    }
    s += double(head.w(l)) * std::tanh(v) / (1.0 + std::exp(-u));
  }
  return s;
}

AttentionScores scores_of(std::vector<double> s, std::vector<TileSpec> coords) {
  return {"s", std::move(s), std::move(coords)};
}

}  // namespace

TEST(Attention, LogitsMatchScalarOracle) {
  const auto head = random_head(3, 8, 12);
  const auto m = random_matrix(10, 12, 1);
  const auto logits = attention_logits(head, m);
  ASSERT_EQ(logits.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(logits[i], logit_oracle(head, m.row(i)), 1e-5);
}

TEST(Attention, ScoresAreSoftmaxOfLogits) {
  const auto head = random_head(4, 8, 12);
  const auto m = random_matrix(7, 12, 2);
  const auto logits = attention_logits(head, m);
  const auto sc = attention_scores(head, m);
  double z = 0;
  for (double l : logits) z += std::exp(l);
  double total = 0;
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_NEAR(sc.scores[i], std::exp(logits[i]) / z, 1e-12);
    total += sc.scores[i];
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_EQ(sc.coords, m.coords());
}

TEST(Attention, SoftmaxIsStable) {
  const std::vector<double> big = {1000.0, 1000.0, 999.0};
  const auto p = softmax(big);
  const double e = std::exp(-1.0);
  EXPECT_NEAR(p[0], 1.0 / (2 + e), 1e-12);
  EXPECT_NEAR(p[2], e / (2 + e), 1e-12);
}

TEST(Attention, ErrorsOnDimAndEmpty) {
  const auto head = random_head(0, 4, 6);
  EmbeddingMatrix empty("s", "e", 6);
  auto code = [](auto f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kIoError;
  };
  EXPECT_EQ(code([&] { (void)attention_scores(head, empty); }), ErrorCode::kEmptyMatrix);
  EXPECT_EQ(code([&] { (void)attention_scores(head, random_matrix(2, 5, 0)); }), ErrorCode::kDimMismatch);
}

TEST(Attention, TopKDescending) {
  const auto s = scores_of({0.1, 0.4, 0.2, 0.3}, {{0, 0, 1, 1}, {1, 0, 1, 1}, {2, 0, 1, 1}, {3, 0, 1, 1}});
  EXPECT_EQ(select_top_k(s, 2), (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(select_top_k(s, 10), (std::vector<std::size_t>{1, 3, 2, 0}));
}

TEST(Attention, TopKTiesFollowRowMajorCoordinates) {
  // rows listed out of raster order; equal scores resolve to (y, x) order
  const auto s = scores_of({0.25, 0.25, 0.25, 0.25}, {{5, 5, 1, 1}, {0, 5, 1, 1}, {9, 0, 1, 1}, {1, 0, 1, 1}});
  EXPECT_EQ(select_top_k(s, 3), (std::vector<std::size_t>{3, 2, 1}));
}

TEST(Attention, HeadRoundTrip) {
  const auto dir = oracle::temp_dir("head");
  const auto head = random_head(9, 5, 7);
  save_head(head, dir / "h.bin");
  EXPECT_EQ(load_head(dir / "h.bin"), head);
  EXPECT_THROW((void)load_head(dir / "missing.bin"), Error);
  std::filesystem::remove_all(dir);
}

TEST(Attention, RandomHeadIsSeeded) {
  EXPECT_EQ(random_head(1, 4, 4), random_head(1, 4, 4));
  EXPECT_FALSE(random_head(1, 4, 4) == random_head(2, 4, 4));
}

TEST(Attention, TrainingConcentratesOnPlantedRows) {
  // positive bags carry a few rows shifted along one direction
  constexpr std::size_t dim = 16, rows = 30, planted = 3;
  std::mt19937 rng(5);
  std::normal_distribution<float> nd(0.0f, 0.3f);
  std::vector<LabeledBag> bags;
  for (int b = 0; b < 40; ++b) {
    EmbeddingMatrix m("b" + std::to_string(b), "e", dim);
    std::vector<float> row(dim);
    for (std::size_t i = 0; i < rows; ++i) {
      for (auto& v : row) v = nd(rng);
      row[0] += 1.0f;
      if (b % 2 == 1 && i < planted) row[1] += 2.0f;
      m.append(row, {static_cast<int>(i), 0, 1, 2.0});
    }
    bags.push_back({std::move(m), b % 2});
  }
  HeadTrainConfig cfg;
  cfg.hidden = 32;
  cfg.lr = 1e-3;
  cfg.epochs = 20;
  const auto head = train_head(bags, cfg);
  double mass = 0;
  int n = 0;
  for (const auto& bag : bags) {
    if (bag.label != 1) continue;
    const auto sc = attention_scores(head, bag.embeddings);
    for (std::size_t i = 0; i < planted; ++i) mass += sc.scores[i];
    ++n;
  }
  // uniform attention would put 3/30 of the mass on planted rows
  EXPECT_GT(mass / n, 0.5);
}

TEST(Attention, TrainingIsDeterministic) {
  std::vector<LabeledBag> bags;
  for (int b = 0; b < 6; ++b) bags.push_back({random_matrix(5, 8, b), b % 2});
  HeadTrainConfig cfg;
  cfg.hidden = 4;
  cfg.epochs = 3;
  EXPECT_EQ(train_head(bags, cfg), train_head(bags, cfg));
}
