#include <gtest/gtest.h>

#include "eagle/error.hpp"
#include "eagle/profiler.hpp"
#include "oracles.hpp"

using namespace eagle;

TEST(Profiler, ParsesCostFile) {
  const auto cost = CostModel::load(std::filesystem::path(EAGLE_DATA_DIR) / "encoder_costs.toml");
  EXPECT_DOUBLE_EQ(cost.flops("ctranspath"), 8.78e11);
  EXPECT_DOUBLE_EQ(cost.flops("virchow2"), 2.31e13);
  EXPECT_DOUBLE_EQ(cost.tiles_at(0.5), 17771);
  EXPECT_DOUBLE_EQ(cost.tiles_at(2.0), 1310);
  EXPECT_THROW((void)cost.flops("unknown"), Error);
  EXPECT_THROW((void)cost.tiles_at(1.0), Error);
}

TEST(Profiler, EstimateSumsStages) {
  const auto cost = CostModel::parse("[flops_per_tile]\na = 2\nb = 10\n[tiles_per_wsi]\n\"1.0\" = 100\n");
  const auto e = estimate_flops(cost, two_tier_plan(cost, "a", 1.0, "b", 25), 4);
  ASSERT_EQ(e.stage_flops.size(), 2u);
  EXPECT_DOUBLE_EQ(e.stage_flops[0], 200);
  EXPECT_DOUBLE_EQ(e.stage_flops[1], 250);
  EXPECT_DOUBLE_EQ(e.per_wsi, 450);
  EXPECT_DOUBLE_EQ(e.total, 1800);
  const auto small = two_tier_plan(cost, "a", 1.0, "b", 25, 7.0);
  EXPECT_DOUBLE_EQ(small[1].tiles, 7.0);
  EXPECT_DOUBLE_EQ(estimate_flops(cost, full_slide_plan(cost, "b", 1.0)).per_wsi, 1000);
}

TEST(Profiler, PercentileSampleNearestRank) {
  std::vector<SlideTileCount> counts;
  for (int i = 0; i < 137; ++i) counts.push_back({"s" + std::to_string(i), double((i * 37) % 137)});
  const auto s = percentile_sample(counts, 25);
  ASSERT_EQ(s.slide_ids.size(), 25u);
  for (std::size_t i = 0; i < 25; ++i) {
    const double p = 2.0 + 4.0 * double(i);
    EXPECT_NEAR(s.percentiles[i], p, 1e-12);
    const auto rank = oracle::nearest_rank(p, counts.size());
    EXPECT_EQ(s.ranks[i], rank);
    EXPECT_DOUBLE_EQ(s.tiles[i], double(rank - 1));
  }
  EXPECT_FALSE(s.has_duplicates);
  EXPECT_TRUE(std::is_sorted(s.tiles.begin(), s.tiles.end()));
  const std::vector<SlideTileCount> few = {{"a", 1}, {"b", 2}};
  EXPECT_TRUE(percentile_sample(few, 25).has_duplicates);
  EXPECT_THROW((void)percentile_sample(std::vector<SlideTileCount>{}, 25), Error);
}

TEST(Profiler, TimingAndNormalization) {
  int calls = 0;
  const auto t = time_stage([&] { ++calls; }, 5, 2);
  EXPECT_EQ(calls, 7);
  EXPECT_EQ(t.samples_ms.size(), 5u);
  EXPECT_LE(t.min_ms, t.median_ms);
  EXPECT_LE(t.median_ms, t.max_ms);
  const auto n = normalize_to({{"a", 2.0}, {"b", 5.0}}, "a");
  EXPECT_DOUBLE_EQ(n.at("b"), 2.5);
  EXPECT_THROW((void)normalize_to({{"a", 0.0}}, "a"), Error);
}
