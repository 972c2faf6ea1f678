#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "eagle/aggregation.hpp"
#include "eagle/attention.hpp"
#include "eagle/config.hpp"
#include "eagle/encoders.hpp"
#include "eagle/tessellation.hpp"

namespace eagle {

struct ManifestEntry {
  std::string slide_id;
  std::string patient_id;
  std::string cohort;
  std::filesystem::path path;  // resolved against the manifest directory
  double mpp = 0.5;
};

/// JSON lines, one {slide_id, patient_id, cohort, path, mpp} per line; blank
/// lines are skipped. Throws ParseError (with the line number) or DuplicateId.
std::vector<ManifestEntry> parse_manifest(const std::string& text, const std::filesystem::path& base_dir = {});
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

/// Reads the slide raster named by a manifest entry.
SlideImage load_slide(const ManifestEntry& entry);

enum class EncoderBackend { kSynthetic, kExternal };

struct EncoderConfig {
  EncoderSpec spec;
  double mpp = 2.0;
  EncoderBackend backend = EncoderBackend::kSynthetic;
  std::uint64_t seed = 0;
  float color_weight = 1.0f;
  EncoderEndpoint endpoint;
};

struct PipelineSpec {
  EncoderConfig scout{default_scout_spec(), 2.0, EncoderBackend::kSynthetic, 0, 1.0f, {}};
  EncoderConfig detail{default_detail_spec(), 0.5, EncoderBackend::kSynthetic, 1, 1.0f, {}};
  std::size_t k = 25;
  SlideSource aggregation = SlideSource::kEagleMean;
  PatientStrategy patient_strategy = PatientStrategy::kAverageSlides;
  double canny_low = 40.0;
  double canny_high = 100.0;
  double min_edge_fraction = 0.02;
  std::size_t head_hidden = 256;
  std::uint64_t head_seed = 0;
  std::optional<std::filesystem::path> head_path;
  std::size_t workers = 1;
  bool dump_tiles = true;

  /// Throws InvalidArgument (k < 1, detail finer than allowed, bad sizes).
  void validate() const;
  TessellationConfig scout_tessellation() const;

  /// Reads [pipeline], [scout] and [detail] sections; absent keys keep defaults.
  static PipelineSpec from_config(const KeyValueConfig& cfg);
};

std::shared_ptr<TileEncoder> make_encoder(const EncoderConfig& cfg);

/// Detail tile for a scout tile: a detail tile_px window at detail mpp
/// centered on the physical region the scout tile covers, clamped to the
/// raster. Throws InvalidArgument when the raster is smaller than the window
/// and UpsamplingRequested when detail_mpp is finer than the raster.
Tile detail_crop(const SlideImage& slide, const TileSpec& scout, double detail_mpp, int detail_tile_px);

struct TileSelection {
  std::size_t rank = 0;  // 1-based
  std::size_t row = 0;   // row of the scout matrix
  TileSpec scout;
  TileSpec detail;
  double score = 0;   // attention over all tiles of the slide
  double weight = 0;  // score renormalized over the selection
  std::string image;  // file name under tiles/, empty when not dumped
};

struct SlideSelection {
  std::string slide_id;
  std::string patient_id;
  std::string cohort;
  std::size_t n_tiles = 0;
  std::vector<TileSelection> tiles;

  std::string to_json() const;
  static SlideSelection from_json(const std::string& text);
};

struct SlideOutcome {
  std::string slide_id;
  std::string patient_id;
  std::string cohort;
  bool ok = false;
  std::string error;
  std::size_t n_tiles = 0;
  std::size_t k_used = 0;
  bool scout_cached = false;
  bool detail_cached = false;
};

struct PipelineResult {
  std::vector<SlideEmbedding> slides;  // manifest order, successful slides only
  std::vector<std::string> slide_patients;
  std::vector<std::string> slide_cohorts;
  std::vector<PatientEmbedding> patients;
  std::vector<std::string> patient_cohorts;
  std::vector<SlideSelection> selections;
  std::vector<SlideOutcome> outcomes;  // every manifest slide

  std::size_t quarantined() const;
};

struct PipelineEncoders {
  std::shared_ptr<TileEncoder> scout;
  std::shared_ptr<TileEncoder> detail;
};

/// Runs every slide through tessellation, scout encoding, attention top-k,
/// detail re-crop and encoding, and aggregation, then writes the run
/// directory:
///   embeddings/slides.emb, embeddings/patients.emb, embeddings/slide_store.emb
///   selections/<slide>.json, tiles/<slide>_<x>_<y>.png, models/head.bin,
///   reports/pipeline.json, log.jsonl, cache/{scout,detail}/<slide>.emb
/// Encoder outputs are cached per slide; a rerun with a warm cache makes no
/// encoder calls. A failing slide is quarantined and logged.
PipelineResult run_pipeline(const std::vector<ManifestEntry>& manifest, const PipelineSpec& spec,
                            const std::filesystem::path& run_dir, const PipelineEncoders& encoders,
                            const AttentionHead& head);

/// Builds encoders from `spec` and loads (or seeds) the head.
PipelineResult run_pipeline(const std::vector<ManifestEntry>& manifest, const PipelineSpec& spec,
                            const std::filesystem::path& run_dir);

AttentionHead pipeline_head(const PipelineSpec& spec);

/// Scout embeddings for one slide (tessellate + encode), no caching.
EmbeddingMatrix scout_embeddings(const SlideImage& slide, const PipelineSpec& spec, TileEncoder& scout);

}  // namespace eagle
