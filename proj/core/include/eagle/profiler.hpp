#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace eagle {

struct CostModel {
  std::map<std::string, double> flops_per_tile;
  /// Average tiles per slide keyed by microns per pixel.
  std::map<double, double> tiles_per_wsi;
  /// Optional published per-slide totals keyed "encoder@mpp".
  std::map<std::string, double> reference_flops_per_wsi;

  double flops(const std::string& encoder) const;
  double tiles_at(double mpp) const;

  static CostModel load(const std::filesystem::path& path);
  static CostModel parse(const std::string& text);
};

struct SlideTileCount {
  std::string slide_id;
  double tiles = 0;
};

struct PercentileSample {
  std::vector<std::string> slide_ids;  // ascending by tile count
  std::vector<double> tiles;
  std::vector<double> percentiles;
  std::vector<std::size_t> ranks;  // 1-based nearest ranks
  bool has_duplicates = false;
};

/// n slides at evenly spaced percentiles from 2 to 98 (step 4 for n = 25),
/// each resolved with the nearest-rank rule ceil(p/100 * N). Throws EmptyInput.
PercentileSample percentile_sample(std::span<const SlideTileCount> counts, std::size_t n = 25);

/// One stage of tile encoding: `tiles` tiles through `encoder`.
struct FlopsStage {
  std::string name;
  std::string encoder;
  double tiles = 0;
};

struct FlopsEstimate {
  std::vector<double> stage_flops;
  double per_wsi = 0;
  double total = 0;
};

/// Sum over stages of flops_per_tile x tiles, and the total over `n_slides`.
FlopsEstimate estimate_flops(const CostModel& cost, std::span<const FlopsStage> stages, double n_slides = 1);

/// Whole-slide encoding: every tile at `mpp` through one encoder.
std::vector<FlopsStage> full_slide_plan(const CostModel& cost, const std::string& encoder, double mpp);

/// Two-tier plan: scout over every tile at scout_mpp, then detail over
/// min(k, N) tiles. N defaults to the cost model's average at scout_mpp.
std::vector<FlopsStage> two_tier_plan(const CostModel& cost, const std::string& scout, double scout_mpp,
                                      const std::string& detail, std::size_t k,
                                      std::optional<double> n_tiles = std::nullopt);

struct TimingStats {
  std::vector<double> samples_ms;
  double mean_ms = 0;
  double median_ms = 0;
  double min_ms = 0;
  double max_ms = 0;
};

/// Runs `stage` warmup + repetitions times and summarizes the timed runs.
TimingStats time_stage(const std::function<void()>& stage, int repetitions, int warmup = 1);

/// Ratio of each value to the baseline, e.g. time relative to a reference model.
std::map<std::string, double> normalize_to(const std::map<std::string, double>& values,
                                           const std::string& baseline);

}  // namespace eagle
