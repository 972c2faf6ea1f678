#include "eagle/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "eagle/error.hpp"
#include "eagle/store.hpp"

namespace eagle {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<ManifestEntry> parse_manifest(const std::string& text, const fs::path& base_dir) {
  std::vector<ManifestEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ManifestEntry e;
    try {
      const auto j = json::parse(line);
      e.slide_id = j.at("slide_id").get<std::string>();
      e.patient_id = j.value("patient_id", e.slide_id);
      e.cohort = j.value("cohort", "");
      e.path = j.at("path").get<std::string>();
      e.mpp = j.at("mpp").get<double>();
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::kParseError, "manifest line " + std::to_string(line_no) + ": " + ex.what());
    }
    if (e.slide_id.empty()) throw Error(ErrorCode::kParseError, "manifest line " + std::to_string(line_no) + ": empty slide_id");
    if (!(e.mpp > 0)) throw Error(ErrorCode::kParseError, "manifest line " + std::to_string(line_no) + ": mpp must be positive");
    if (!seen.emplace(e.slide_id, line_no).second) {
      throw Error(ErrorCode::kDuplicateId, "manifest repeats slide " + e.slide_id);
    }
    if (e.path.is_relative() && !base_dir.empty()) e.path = base_dir / e.path;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path());
}

SlideImage load_slide(const ManifestEntry& entry) {
  return SlideImage{entry.slide_id, read_image(entry.path), entry.mpp, entry.cohort};
}

void write_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  for (const auto& e : entries) {
    out << json{{"slide_id", e.slide_id}, {"patient_id", e.patient_id}, {"cohort", e.cohort},
                {"path", e.path.string()}, {"mpp", e.mpp}}
               .dump()
        << "\n";
  }
}

void PipelineSpec::validate() const {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (!(scout.mpp > 0) || !(detail.mpp > 0)) throw Error(ErrorCode::kInvalidArgument, "mpp must be positive");
  if (scout.spec.tile_px <= 0 || detail.spec.tile_px <= 0) throw Error(ErrorCode::kInvalidArgument, "tile_px must be positive");
  if (scout.spec.dim == 0 || detail.spec.dim == 0) throw Error(ErrorCode::kInvalidArgument, "encoder dim must be positive");
  if (workers < 1) throw Error(ErrorCode::kInvalidArgument, "workers must be >= 1");
  if (patient_strategy == PatientStrategy::kJoint && aggregation == SlideSource::kMeanPool) {
    throw Error(ErrorCode::kInvalidArgument, "joint patient strategy needs an eagle aggregation");
  }
  scout_tessellation().validate();
}

TessellationConfig PipelineSpec::scout_tessellation() const {
  TessellationConfig t;
  t.tile_px = scout.spec.tile_px;
  t.target_mpp = scout.mpp;
  t.canny_low = canny_low;
  t.canny_high = canny_high;
  t.min_edge_fraction = min_edge_fraction;
  return t;
}

namespace {

EncoderConfig encoder_from(const KeyValueConfig& cfg, const std::string& section, EncoderConfig e) {
  const auto key = [&](const char* k) { return section + "." + k; };
  e.spec.name = cfg.get_string(key("name"), e.spec.name);
  e.spec.dim = static_cast<std::size_t>(cfg.get_int(key("dim"), static_cast<long long>(e.spec.dim)));
  e.spec.tile_px = static_cast<int>(cfg.get_int(key("tile_px"), e.spec.tile_px));
  e.spec.flops_per_tile = cfg.get_double(key("flops_per_tile"), e.spec.flops_per_tile);
  e.mpp = cfg.get_double(key("mpp"), e.mpp);
  e.seed = static_cast<std::uint64_t>(cfg.get_int(key("seed"), static_cast<long long>(e.seed)));
  e.color_weight = static_cast<float>(cfg.get_double(key("color_weight"), e.color_weight));
  const auto backend = cfg.get_string(key("backend"), e.backend == EncoderBackend::kSynthetic ? "synthetic" : "external");
  if (backend == "synthetic") {
    e.backend = EncoderBackend::kSynthetic;
  } else if (backend == "external") {
    e.backend = EncoderBackend::kExternal;
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown encoder backend '" + backend + "'");
  }
  e.endpoint.host = cfg.get_string(key("host"), e.endpoint.host);
  e.endpoint.port = static_cast<int>(cfg.get_int(key("port"), e.endpoint.port));
  e.endpoint.path = cfg.get_string(key("path"), e.endpoint.path);
  e.endpoint.batch_size = static_cast<std::size_t>(cfg.get_int(key("batch_size"), static_cast<long long>(e.endpoint.batch_size)));
  e.endpoint.timeout = std::chrono::milliseconds(cfg.get_int(key("timeout_ms"), e.endpoint.timeout.count()));
  return e;
}

std::string fingerprint(const EncoderConfig& e) {
  std::ostringstream s;
  s.precision(17);
  s << e.spec.name << '|' << e.spec.dim << '|' << e.spec.tile_px << '|' << e.mpp << '|'
    << (e.backend == EncoderBackend::kSynthetic ? "synthetic" : "external") << '|' << e.seed << '|' << e.color_weight;
  if (e.backend == EncoderBackend::kExternal) s << '|' << e.endpoint.host << ':' << e.endpoint.port << e.endpoint.path;
  return s.str();
}

std::string scout_fingerprint(const PipelineSpec& spec) {
  std::ostringstream s;
  s.precision(17);
  s << fingerprint(spec.scout) << "|canny:" << spec.canny_low << ',' << spec.canny_high << ',' << spec.min_edge_fraction;
  return s.str();
}

std::string rows_key(std::span<const std::size_t> rows) {
  std::string s;
  for (std::size_t r : rows) {
    if (!s.empty()) s += ',';
    s += std::to_string(r);
  }
  return s;
}

std::optional<EmbeddingMatrix> try_cache(const fs::path& path, const std::string& fp, const std::string& rows) {
  if (!fs::exists(path)) return std::nullopt;
  try {
    auto m = cache_read(path);
    const auto& md = m.metadata();
    const auto f = md.find("fingerprint");
    if (f == md.end() || f->second != fp) return std::nullopt;
    if (!rows.empty()) {
      const auto r = md.find("rows");
      if (r == md.end() || r->second != rows) return std::nullopt;
    }
    return m;
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::string tile_file_name(const std::string& slide_id, const TileSpec& scout) {
  return slide_id + "_" + std::to_string(scout.x_px) + "_" + std::to_string(scout.y_px) + ".png";
}

struct SlideWork {
  const ManifestEntry* entry = nullptr;
  SlideOutcome outcome;
  std::optional<SlideImage> image;
  EmbeddingMatrix scout;
  std::vector<std::size_t> rows;     // selected scout rows, rank order
  std::vector<double> scores;        // attention of the selected rows
  EmbeddingMatrix detail_selected;   // aligned with rows
  EmbeddingMatrix detail_all;        // mean-pool mode only
  SlideSelection selection;
  std::optional<SlideEmbedding> embedding;
};

class Runner {
public:
  Runner(const PipelineSpec& spec, const fs::path& run_dir, const PipelineEncoders& enc, const AttentionHead& head)
      : spec_(spec), run_dir_(run_dir), enc_(enc), head_(head),
        scout_fp_(scout_fingerprint(spec)), detail_fp_(fingerprint(spec.detail)) {}

  void process_patient(std::vector<SlideWork*>& slides, std::optional<PatientEmbedding>& patient) {
    std::vector<SlideWork*> alive;
    for (SlideWork* w : slides) {
      guarded(*w, [&] { scout_stage(*w); });
      if (w->outcome.error.empty()) alive.push_back(w);
    }
    if (alive.empty()) return;

    if (spec_.patient_strategy == PatientStrategy::kJoint) {
      joint_select_stage(alive);
    } else {
      for (SlideWork* w : alive) guarded(*w, [&] { select_stage(*w); });
    }
    std::vector<SlideWork*> done;
    for (SlideWork* w : alive) {
      if (!w->outcome.error.empty()) continue;
      guarded(*w, [&] {
        detail_stage(*w);
        aggregate_stage(*w);
      });
      if (w->outcome.error.empty()) {
        w->outcome.ok = true;
        done.push_back(w);
      }
    }
    if (done.empty()) return;
    patient = patient_stage(done);
  }

private:
  template <typename F>
  void guarded(SlideWork& w, F&& f) {
    try {
      f();
    } catch (const std::exception& e) {
      w.outcome.error = e.what();
      w.outcome.ok = false;
      w.embedding.reset();
    }
  }

  const SlideImage& image(SlideWork& w) {
    if (!w.image) {
      w.image = load_slide(*w.entry);
    }
    return *w.image;
  }

  void scout_stage(SlideWork& w) {
    const fs::path cache = run_dir_ / "cache" / "scout" / (w.entry->slide_id + ".emb");
    if (auto hit = try_cache(cache, scout_fp_, "")) {
      w.scout = std::move(*hit);
      w.outcome.scout_cached = true;
    } else {
      w.scout = scout_embeddings(image(w), spec_, *enc_.scout);
      w.scout.metadata()["fingerprint"] = scout_fp_;
      cache_write(w.scout, cache);
    }
    w.outcome.n_tiles = w.scout.rows();
  }

  void select_stage(SlideWork& w) {
    const auto scores = attention_scores(head_, w.scout);
    w.rows = select_top_k(scores, spec_.k);
    w.scores.clear();
    for (std::size_t r : w.rows) w.scores.push_back(scores.scores[r]);
  }

  void joint_select_stage(std::vector<SlideWork*>& alive) {
    std::vector<EmbeddingMatrix> scouts;
    for (SlideWork* w : alive) scouts.push_back(w->scout);
    std::vector<JointPick> picks;
    try {
      picks = joint_select(head_, scouts, spec_.k);
    } catch (const std::exception& e) {
      for (SlideWork* w : alive) w->outcome.error = e.what();
      return;
    }
    for (SlideWork* w : alive) {
      w->rows.clear();
      w->scores.clear();
    }
    for (const auto& p : picks) {
      alive[p.slide]->rows.push_back(p.row);
      alive[p.slide]->scores.push_back(p.score);
    }
  }

  void detail_stage(SlideWork& w) {
    const bool all = spec_.aggregation == SlideSource::kMeanPool;
    std::vector<std::size_t> need;
    if (all) {
      need.resize(w.scout.rows());
      for (std::size_t i = 0; i < need.size(); ++i) need[i] = i;
    } else {
      need = w.rows;
    }
    const std::string key = rows_key(need);
    const fs::path cache = run_dir_ / "cache" / "detail" / (w.entry->slide_id + ".emb");

    EmbeddingMatrix detail;
    std::vector<RgbImage> crops;
    if (need.empty()) {
      detail = EmbeddingMatrix(w.entry->slide_id, enc_.detail->spec().name, enc_.detail->spec().dim);
    } else if (auto hit = try_cache(cache, detail_fp_, key)) {
      detail = std::move(*hit);
      w.outcome.detail_cached = true;
    } else {
      std::vector<Tile> tiles;
      tiles.reserve(need.size());
      for (std::size_t r : need) {
        tiles.push_back(detail_crop(image(w), w.scout.coords()[r], spec_.detail.mpp, spec_.detail.spec.tile_px));
      }
      detail = enc_.detail->encode(w.entry->slide_id, tiles);
      if (detail.rows() != need.size() || detail.dim() != enc_.detail->spec().dim) {
        throw Error(ErrorCode::kShapeMismatch, "detail encoder returned an unexpected shape");
      }
      detail.metadata()["fingerprint"] = detail_fp_;
      detail.metadata()["rows"] = key;
      cache_write(detail, cache);
      for (auto& t : tiles) crops.push_back(std::move(t.pixels));
    }

    // detail rows aligned with the selection
    if (all) {
      w.detail_all = detail;
      w.detail_selected = detail.select(w.rows);
    } else {
      w.detail_selected = detail;
    }

    double mass = 0;
    for (double s : w.scores) mass += s;
    w.selection = SlideSelection{w.entry->slide_id, w.entry->patient_id, w.entry->cohort, w.scout.rows(), {}};
    for (std::size_t i = 0; i < w.rows.size(); ++i) {
      TileSelection t;
      t.rank = i + 1;
      t.row = w.rows[i];
      t.scout = w.scout.coords()[w.rows[i]];
      t.detail = w.detail_selected.coords()[i];
      t.score = w.scores[i];
      t.weight = mass > 0 ? w.scores[i] / mass : 1.0 / static_cast<double>(w.rows.size());
      if (spec_.dump_tiles) {
        t.image = tile_file_name(w.entry->slide_id, t.scout);
        const fs::path out = run_dir_ / "tiles" / t.image;
        if (!fs::exists(out)) {
          const std::size_t crop_index = all ? w.rows[i] : i;
          if (crop_index < crops.size()) {
            write_png(crops[crop_index], out);
          } else {
            write_png(detail_crop(image(w), t.scout, spec_.detail.mpp, spec_.detail.spec.tile_px).pixels, out);
          }
        }
      }
      w.selection.tiles.push_back(std::move(t));
    }
    w.outcome.k_used = w.rows.size();
  }

  void aggregate_stage(SlideWork& w) {
    if (w.rows.empty() && spec_.aggregation != SlideSource::kMeanPool) return;  // joint mode, no picks here
    SlideEmbedding e;
    switch (spec_.aggregation) {
      case SlideSource::kEagleMean:
        e = eagle_slide_embedding(w.detail_selected);
        break;
      case SlideSource::kEagleWeighted:
        e = weighted_slide_embedding(w.detail_selected, w.scores);
        break;
      case SlideSource::kMeanPool:
        e = mean_pool_all(w.detail_all);
        break;
    }
    e.slide_id = w.entry->slide_id;
    w.embedding = std::move(e);
  }

  PatientEmbedding patient_stage(std::vector<SlideWork*>& done) {
    const std::string& pid = done.front()->entry->patient_id;
    if (spec_.patient_strategy == PatientStrategy::kAverageSlides) {
      std::vector<SlideEmbedding> slides;
      for (SlideWork* w : done) slides.push_back(*w->embedding);
      return average_slides(pid, slides);
    }
    // joint: pooled picks across slides, in global rank order
    std::vector<std::pair<double, std::pair<std::size_t, std::size_t>>> order;
    for (std::size_t s = 0; s < done.size(); ++s) {
      for (std::size_t i = 0; i < done[s]->rows.size(); ++i) order.push_back({done[s]->scores[i], {s, i}});
    }
    double mass = 0;
    for (const auto& o : order) mass += o.first;
    const std::size_t dim = enc_.detail->spec().dim;
    std::vector<double> acc(dim, 0.0);
    for (const auto& [score, at] : order) {
      const double wgt = spec_.aggregation == SlideSource::kEagleWeighted && mass > 0
                             ? score / mass
                             : 1.0 / static_cast<double>(order.size());
      const auto row = done[at.first]->detail_selected.row(at.second);
      for (std::size_t d = 0; d < dim; ++d) acc[d] += wgt * row[d];
    }
    PatientEmbedding p;
    p.patient_id = pid;
    p.strategy = PatientStrategy::kJoint;
    p.encoder = enc_.detail->spec().name;
    p.vector.assign(acc.begin(), acc.end());
    for (SlideWork* w : done) p.slide_ids.push_back(w->entry->slide_id);
    if (order.empty()) throw Error(ErrorCode::kEmptySelection, "patient " + pid + " has no picks");
    return p;
  }

  const PipelineSpec& spec_;
  fs::path run_dir_;
  PipelineEncoders enc_;
  const AttentionHead& head_;
  std::string scout_fp_;
  std::string detail_fp_;
};

std::map<std::string, std::string> slide_meta(const SlideEmbedding& e, const std::string& patient, const std::string& cohort) {
  return {{"patient_id", patient}, {"cohort", cohort}, {"source", to_string(e.source)}, {"k_used", std::to_string(e.k_used)}};
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
    out << text;
  }
  fs::rename(tmp, path);
}

}  // namespace

std::shared_ptr<TileEncoder> make_encoder(const EncoderConfig& cfg) {
  if (cfg.backend == EncoderBackend::kExternal) return std::make_shared<ExternalEncoder>(cfg.spec, cfg.endpoint);
  return std::make_shared<SyntheticEncoder>(cfg.spec, cfg.seed, cfg.color_weight);
}

PipelineSpec PipelineSpec::from_config(const KeyValueConfig& cfg) {
  PipelineSpec s;
  s.scout = encoder_from(cfg, "scout", s.scout);
  s.detail = encoder_from(cfg, "detail", s.detail);
  s.k = static_cast<std::size_t>(cfg.get_int("pipeline.k", static_cast<long long>(s.k)));
  s.aggregation = parse_slide_source(cfg.get_string("pipeline.aggregation", to_string(s.aggregation)));
  s.patient_strategy = parse_patient_strategy(cfg.get_string("pipeline.patient_strategy", to_string(s.patient_strategy)));
  s.canny_low = cfg.get_double("pipeline.canny_low", s.canny_low);
  s.canny_high = cfg.get_double("pipeline.canny_high", s.canny_high);
  s.min_edge_fraction = cfg.get_double("pipeline.min_edge_fraction", s.min_edge_fraction);
  s.head_hidden = static_cast<std::size_t>(cfg.get_int("pipeline.head_hidden", static_cast<long long>(s.head_hidden)));
  s.head_seed = static_cast<std::uint64_t>(cfg.get_int("pipeline.head_seed", static_cast<long long>(s.head_seed)));
  if (const auto h = cfg.get_string("pipeline.head"); !h.empty()) s.head_path = h;
  s.workers = static_cast<std::size_t>(cfg.get_int("pipeline.workers", static_cast<long long>(s.workers)));
  s.dump_tiles = cfg.get_bool("pipeline.dump_tiles", s.dump_tiles);
  s.validate();
  return s;
}

Tile detail_crop(const SlideImage& slide, const TileSpec& scout, double detail_mpp, int detail_tile_px) {
  if (detail_mpp < slide.mpp) {
    throw Error(ErrorCode::kUpsamplingRequested, "detail mpp is finer than the slide raster of " + slide.slide_id);
  }
  // physical center of the scout tile, in raster pixels
  const double cx = (scout.x_px + scout.size_px / 2.0) * scout.mpp / slide.mpp;
  const double cy = (scout.y_px + scout.size_px / 2.0) * scout.mpp / slide.mpp;
  const double ratio = detail_mpp / slide.mpp;
  const int window = static_cast<int>(std::lround(detail_tile_px * ratio));
  if (window > slide.width_px() || window > slide.height_px()) {
    throw Error(ErrorCode::kInvalidArgument, "slide " + slide.slide_id + " is smaller than one detail tile");
  }
  const int x0 = std::clamp(static_cast<int>(std::lround(cx - window / 2.0)), 0, slide.width_px() - window);
  const int y0 = std::clamp(static_cast<int>(std::lround(cy - window / 2.0)), 0, slide.height_px() - window);
  Tile t;
  t.pixels = slide.pixels.crop(x0, y0, window, window);
  if (window != detail_tile_px) t.pixels = resize_bilinear(t.pixels, detail_tile_px, detail_tile_px);
  t.spec = TileSpec{static_cast<int>(std::lround(x0 / ratio)), static_cast<int>(std::lround(y0 / ratio)), detail_tile_px,
                    detail_mpp};
  return t;
}

std::string SlideSelection::to_json() const {
  json tiles_j = json::array();
  for (const auto& t : tiles) {
    tiles_j.push_back({{"rank", t.rank},
                       {"row", t.row},
                       {"x_px", t.scout.x_px},
                       {"y_px", t.scout.y_px},
                       {"size_px", t.scout.size_px},
                       {"mpp", t.scout.mpp},
                       {"detail", {t.detail.x_px, t.detail.y_px, t.detail.size_px, t.detail.mpp}},
                       {"score", t.score},
                       {"weight", t.weight},
                       {"image", t.image}});
  }
  return json{{"slide_id", slide_id}, {"patient_id", patient_id}, {"cohort", cohort}, {"n_tiles", n_tiles},
              {"k", tiles.size()}, {"tiles", tiles_j}}
      .dump(1);
}

SlideSelection SlideSelection::from_json(const std::string& text) {
  SlideSelection s;
  try {
    const auto j = json::parse(text);
    s.slide_id = j.at("slide_id").get<std::string>();
    s.patient_id = j.value("patient_id", "");
    s.cohort = j.value("cohort", "");
    s.n_tiles = j.value("n_tiles", std::size_t{0});
    for (const auto& t : j.at("tiles")) {
      TileSelection ts;
      ts.rank = t.at("rank").get<std::size_t>();
      ts.row = t.value("row", std::size_t{0});
      ts.scout = TileSpec{t.at("x_px").get<int>(), t.at("y_px").get<int>(), t.at("size_px").get<int>(), t.at("mpp").get<double>()};
      const auto& d = t.at("detail");
      ts.detail = TileSpec{d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<int>(), d.at(3).get<double>()};
      ts.score = t.at("score").get<double>();
      ts.weight = t.at("weight").get<double>();
      ts.image = t.value("image", "");
      s.tiles.push_back(std::move(ts));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("selection record: ") + e.what());
  }
  return s;
}

std::size_t PipelineResult::quarantined() const {
  return static_cast<std::size_t>(std::count_if(outcomes.begin(), outcomes.end(), [](const auto& o) { return !o.ok; }));
}

EmbeddingMatrix scout_embeddings(const SlideImage& slide, const PipelineSpec& spec, TileEncoder& scout) {
  const auto tiles = tessellate(slide, spec.scout_tessellation());
  if (tiles.empty()) throw Error(ErrorCode::kEmptyInput, "slide " + slide.slide_id + " has no foreground tiles");
  auto m = scout.encode(slide.slide_id, tiles);
  if (m.rows() != tiles.size() || m.dim() != scout.spec().dim) {
    throw Error(ErrorCode::kShapeMismatch, "scout encoder returned an unexpected shape");
  }
  return m;
}

AttentionHead pipeline_head(const PipelineSpec& spec) {
  if (spec.head_path) {
    auto head = load_head(*spec.head_path);
    if (head.input_dim() != spec.scout.spec.dim) {
      throw Error(ErrorCode::kDimMismatch, "head expects dim " + std::to_string(head.input_dim()) + ", scout encoder has " +
                                               std::to_string(spec.scout.spec.dim));
    }
    return head;
  }
  return random_head(spec.head_seed, spec.head_hidden, spec.scout.spec.dim);
}

PipelineResult run_pipeline(const std::vector<ManifestEntry>& manifest, const PipelineSpec& spec, const fs::path& run_dir) {
  spec.validate();
  PipelineEncoders enc{make_encoder(spec.scout), make_encoder(spec.detail)};
  return run_pipeline(manifest, spec, run_dir, enc, pipeline_head(spec));
}

PipelineResult run_pipeline(const std::vector<ManifestEntry>& manifest, const PipelineSpec& spec, const fs::path& run_dir,
                            const PipelineEncoders& encoders, const AttentionHead& head) {
  spec.validate();
  if (!encoders.scout || !encoders.detail) throw Error(ErrorCode::kInvalidArgument, "pipeline needs two encoders");
  if (head.input_dim() != encoders.scout->spec().dim) throw Error(ErrorCode::kDimMismatch, "head does not match the scout encoder");
  for (const char* sub : {"embeddings", "selections", "models", "reports", "tiles", "cache/scout", "cache/detail"}) {
    fs::create_directories(run_dir / sub);
  }

  std::vector<SlideWork> work(manifest.size());
  std::vector<std::string> patient_order;
  std::map<std::string, std::vector<std::size_t>> by_patient;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    work[i].entry = &manifest[i];
    work[i].outcome.slide_id = manifest[i].slide_id;
    work[i].outcome.patient_id = manifest[i].patient_id;
    work[i].outcome.cohort = manifest[i].cohort;
    auto& group = by_patient[manifest[i].patient_id];
    if (group.empty()) patient_order.push_back(manifest[i].patient_id);
    group.push_back(i);
  }

  Runner runner(spec, run_dir, encoders, head);
  std::vector<std::optional<PatientEmbedding>> patients(patient_order.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t u = next++; u < patient_order.size(); u = next++) {
      std::vector<SlideWork*> slides;
      for (std::size_t i : by_patient[patient_order[u]]) slides.push_back(&work[i]);
      try {
        runner.process_patient(slides, patients[u]);
      } catch (const std::exception& e) {
        for (SlideWork* w : slides) {
          w->outcome.ok = false;
          if (w->outcome.error.empty()) w->outcome.error = e.what();
        }
        patients[u].reset();
      }
      for (SlideWork* w : slides) w->image.reset();
    }
  };
  const std::size_t n_threads = std::min(spec.workers, std::max<std::size_t>(1, patient_order.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  PipelineResult result;
  EmbeddingTable slide_table{"slides", encoders.detail->spec().name, encoders.detail->spec().dim, {}, {}, {}};
  EmbeddingStore store;
  for (auto& w : work) {
    result.outcomes.push_back(w.outcome);
    if (!w.outcome.ok) continue;
    result.selections.push_back(w.selection);
    write_text(run_dir / "selections" / (w.entry->slide_id + ".json"), w.selection.to_json());
    if (!w.embedding) continue;
    slide_table.append(w.embedding->slide_id, w.embedding->vector, slide_meta(*w.embedding, w.entry->patient_id, w.entry->cohort));
    try {
      store.add({w.embedding->slide_id, w.entry->cohort, w.embedding->vector,
                 {{"patient_id", w.entry->patient_id}, {"k_used", std::to_string(w.embedding->k_used)}}});
    } catch (const Error& e) {
      w.outcome.error = std::string("not searchable: ") + e.what();
    }
    result.slides.push_back(*w.embedding);
    result.slide_patients.push_back(w.entry->patient_id);
    result.slide_cohorts.push_back(w.entry->cohort);
  }

  EmbeddingTable patient_table{"patients", encoders.detail->spec().name, encoders.detail->spec().dim, {}, {}, {}};
  for (std::size_t u = 0; u < patient_order.size(); ++u) {
    if (!patients[u]) continue;
    const auto& p = *patients[u];
    std::string slides;
    for (const auto& s : p.slide_ids) slides += (slides.empty() ? "" : ",") + s;
    const std::string cohort = manifest[by_patient[patient_order[u]].front()].cohort;
    patient_table.append(p.patient_id, p.vector,
                         {{"cohort", cohort}, {"strategy", to_string(p.strategy)}, {"slides", slides},
                          {"source", to_string(spec.aggregation)}});
    result.patients.push_back(p);
    result.patient_cohorts.push_back(cohort);
  }
  write_table(slide_table, run_dir / "embeddings" / "slides.emb");
  write_table(patient_table, run_dir / "embeddings" / "patients.emb");
  if (store.size() > 0) store.save(run_dir / "embeddings" / "slide_store.emb");
  save_head(head, run_dir / "models" / "head.bin");

  std::ostringstream log;
  json quarantined = json::array();
  std::size_t scout_tiles = 0, detail_tiles = 0;
  for (const auto& o : result.outcomes) {
    json line = {{"event", "slide"},       {"slide_id", o.slide_id},         {"patient_id", o.patient_id},
                 {"cohort", o.cohort},      {"status", o.ok ? "ok" : "quarantined"}, {"n_tiles", o.n_tiles},
                 {"k_used", o.k_used},      {"scout_cached", o.scout_cached}, {"detail_cached", o.detail_cached}};
    if (!o.error.empty()) line["error"] = o.error;
    log << line.dump() << "\n";
    if (!o.ok) quarantined.push_back({{"slide_id", o.slide_id}, {"error", o.error}});
    if (o.ok) {
      scout_tiles += o.n_tiles;
      detail_tiles += spec.aggregation == SlideSource::kMeanPool ? o.n_tiles : o.k_used;
    }
  }
  const std::size_t n_ok = result.outcomes.size() - result.quarantined();
  log << json{{"event", "summary"},
              {"slides_total", result.outcomes.size()},
              {"slides_ok", n_ok},
              {"slides_quarantined", result.quarantined()},
              {"patients", result.patients.size()}}
             .dump()
      << "\n";
  write_text(run_dir / "log.jsonl", log.str());

  const json report = {{"slides_total", result.outcomes.size()},
                       {"slides_ok", n_ok},
                       {"quarantined", quarantined},
                       {"patients", result.patients.size()},
                       {"k", spec.k},
                       {"aggregation", to_string(spec.aggregation)},
                       {"patient_strategy", to_string(spec.patient_strategy)},
                       {"scout", {{"encoder", spec.scout.spec.name}, {"mpp", spec.scout.mpp}, {"tiles", scout_tiles}}},
                       {"detail", {{"encoder", spec.detail.spec.name}, {"mpp", spec.detail.mpp}, {"tiles", detail_tiles}}}};
  write_text(run_dir / "reports" / "pipeline.json", report.dump(1) + "\n");
  return result;
}

}  // namespace eagle
