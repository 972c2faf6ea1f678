#include "eagle/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eagle/config.hpp"
#include "eagle/error.hpp"

namespace eagle {

double CostModel::flops(const std::string& encoder) const {
  const auto it = flops_per_tile.find(encoder);
  if (it == flops_per_tile.end()) throw Error(ErrorCode::kInvalidArgument, "no FLOPs entry for encoder " + encoder);
  return it->second;
}

double CostModel::tiles_at(double mpp) const {
  for (const auto& [m, t] : tiles_per_wsi) {
    if (std::fabs(m - mpp) < 1e-9) return t;
  }
  throw Error(ErrorCode::kInvalidArgument, "no average tile count at " + std::to_string(mpp) + " mpp");
}

namespace {

CostModel from_config(const KeyValueConfig& cfg) {
  CostModel m;
  for (const auto& k : cfg.keys_in("flops_per_tile")) {
    const double v = cfg.get_double("flops_per_tile." + k, 0);
    if (v < 0) throw Error(ErrorCode::kInvalidArgument, "negative FLOPs for " + k);
    m.flops_per_tile[k] = v;
  }
  for (const auto& k : cfg.keys_in("tiles_per_wsi")) {
    const double v = cfg.get_double("tiles_per_wsi." + k, 0);
    if (v < 0) throw Error(ErrorCode::kInvalidArgument, "negative tile count at " + k);
    m.tiles_per_wsi[std::stod(k)] = v;
  }
  for (const auto& k : cfg.keys_in("reference_flops_per_wsi")) {
    m.reference_flops_per_wsi[k] = cfg.get_double("reference_flops_per_wsi." + k, 0);
  }
  return m;
}

}  // namespace

CostModel CostModel::parse(const std::string& text) { return from_config(KeyValueConfig::parse(text)); }
CostModel CostModel::load(const std::filesystem::path& path) { return from_config(KeyValueConfig::load(path)); }

PercentileSample percentile_sample(std::span<const SlideTileCount> counts, std::size_t n) {
  if (counts.empty()) throw Error(ErrorCode::kEmptyInput, "no slides to sample");
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "n must be >= 1");
  std::vector<std::size_t> order(counts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (counts[a].tiles != counts[b].tiles) return counts[a].tiles < counts[b].tiles;
    return counts[a].slide_id < counts[b].slide_id;
  });
  PercentileSample out;
  const double N = static_cast<double>(counts.size());
  std::size_t prev_rank = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = n == 1 ? 50.0 : 2.0 + 96.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    // tolerate floating error in p/100*N before the ceiling
    const auto rank = static_cast<std::size_t>(
        std::clamp(std::ceil(p / 100.0 * N - 1e-9), 1.0, N));
    if (rank == prev_rank) out.has_duplicates = true;
    prev_rank = rank;
    const auto& c = counts[order[rank - 1]];
    out.percentiles.push_back(p);
    out.ranks.push_back(rank);
    out.slide_ids.push_back(c.slide_id);
    out.tiles.push_back(c.tiles);
  }
  return out;
}

FlopsEstimate estimate_flops(const CostModel& cost, std::span<const FlopsStage> stages, double n_slides) {
  FlopsEstimate e;
  for (const auto& s : stages) {
    if (s.tiles < 0) throw Error(ErrorCode::kInvalidArgument, "negative tile count in stage " + s.name);
    const double f = s.tiles == 0 ? 0.0 : cost.flops(s.encoder) * s.tiles;
    e.stage_flops.push_back(f);
    e.per_wsi += f;
  }
  e.total = e.per_wsi * n_slides;
  return e;
}

std::vector<FlopsStage> full_slide_plan(const CostModel& cost, const std::string& encoder, double mpp) {
  return {{"tile_encoding", encoder, cost.tiles_at(mpp)}};
}

std::vector<FlopsStage> two_tier_plan(const CostModel& cost, const std::string& scout, double scout_mpp,
                                      const std::string& detail, std::size_t k, std::optional<double> n_tiles) {
  const double n = n_tiles.value_or(cost.tiles_at(scout_mpp));
  return {{"scout", scout, n}, {"detail", detail, std::min(static_cast<double>(k), n)}};
}

TimingStats time_stage(const std::function<void()>& stage, int repetitions, int warmup) {
  if (repetitions < 1) throw Error(ErrorCode::kInvalidArgument, "repetitions must be >= 1");
  for (int i = 0; i < warmup; ++i) stage();
  TimingStats t;
  for (int i = 0; i < repetitions; ++i) {
    const auto start = std::chrono::steady_clock::now();
    stage();
    const auto stop = std::chrono::steady_clock::now();
    t.samples_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  std::vector<double> sorted = t.samples_ms;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  t.mean_ms = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  t.median_ms = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  t.min_ms = sorted.front();
  t.max_ms = sorted.back();
  return t;
}

std::map<std::string, double> normalize_to(const std::map<std::string, double>& values, const std::string& baseline) {
  const auto it = values.find(baseline);
  if (it == values.end() || it->second == 0) {
    throw Error(ErrorCode::kInvalidArgument, "baseline " + baseline + " missing or zero");
  }
  std::map<std::string, double> out;
  for (const auto& [k, v] : values) out[k] = v / it->second;
  return out;
}

}  // namespace eagle
