#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "eagle/tessellation.hpp"

namespace eagle {

/// Procedural H&E-like slides: pink tissue with small dark nuclei, a
/// distinct dense "signal" texture planted in a fraction of cells, and
/// white background cells. Every slide gets its own stain and density
/// jitter so slide-level averages are noisy.
struct SyntheticSlideConfig {
  int grid_cols = 16;
  int grid_rows = 16;
  int cell_px = 64;          // grid cell edge at raster resolution
  double raster_mpp = 1.0;
  double signal_fraction = 0.10;
  double background_fraction = 0.0;
  double stain_jitter = 18.0;    // max per-channel offset of the tissue colors
  double density_jitter = 0.35;  // relative spread of nucleus density
};

struct CellIndex {
  int col = 0;
  int row = 0;
  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

struct SyntheticSlide {
  SlideImage slide;
  std::vector<CellIndex> planted;
  std::vector<CellIndex> background;
  int label = 0;
};

SyntheticSlide make_synthetic_slide(const std::string& slide_id, int label, std::uint64_t seed,
                                    const SyntheticSlideConfig& cfg = {});

/// True when the tile at `spec` (any resolution) overlaps a planted cell by
/// more than half its area.
bool is_planted(const SyntheticSlide& s, const TileSpec& spec, double raster_mpp, int cell_px);

struct SyntheticCohortEntry {
  std::string slide_id;
  std::string patient_id;
  std::string cohort;
  int label = 0;
  std::filesystem::path path;
  double mpp = 1.0;
};

/// Writes n_per_class slides per class as PNG plus manifest.jsonl and
/// labels.csv under `dir`. One slide per patient. Returned paths include
/// `dir`; manifest paths are relative to it.
std::vector<SyntheticCohortEntry> write_synthetic_cohort(const std::filesystem::path& dir,
                                                         const std::string& cohort, int n_per_class,
                                                         std::uint64_t seed,
                                                         const SyntheticSlideConfig& cfg = {});

}  // namespace eagle
