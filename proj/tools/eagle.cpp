#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eagle/aggregation.hpp"
#include "eagle/attention.hpp"
#include "eagle/config.hpp"
#include "eagle/embedding.hpp"
#include "eagle/error.hpp"
#include "eagle/experiment.hpp"
#include "eagle/linear_probe.hpp"
#include "eagle/metrics.hpp"
#include "eagle/mlp.hpp"
#include "eagle/pipeline.hpp"
#include "eagle/profiler.hpp"
#include "eagle/service.hpp"
#include "eagle/store.hpp"
#include "eagle/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace eagle;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

KeyValueConfig load_config(const Common& c) {
  KeyValueConfig cfg = c.config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(c.config_path);
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::kInvalidArgument, "override must be key=value: " + o);
    cfg.set(o.substr(0, eq), o.substr(eq + 1));
  }
  return cfg;
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "TOML-style configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "override a config key, e.g. --set pipeline.k=10");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << text;
}

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::string cohort = "synthetic";
  int per_class = 10;
  std::uint64_t seed = 0;
  SyntheticSlideConfig slide;
};

int run_synth(const SynthArgs& a) {
  const auto entries = write_synthetic_cohort(a.out, a.cohort, a.per_class, a.seed, a.slide);
  emit({{"slides", entries.size()},
        {"manifest", (fs::path(a.out) / "manifest.jsonl").string()},
        {"labels", (fs::path(a.out) / "labels.csv").string()}});
  return 0;
}

// ---- tessellate -------------------------------------------------------------

struct TessellateArgs {
  Common common;
  std::string manifest;
  std::string tiles_out;
};

int run_tessellate(const TessellateArgs& a) {
  const auto spec = PipelineSpec::from_config(load_config(a.common));
  const auto cfg = spec.scout_tessellation();
  json slides = json::array();
  for (const auto& e : read_manifest(a.manifest)) {
    const auto slide = load_slide(e);
    const auto grid = plan_grid(rescale(slide, cfg.target_mpp), cfg);
    const auto tiles = tessellate(slide, cfg);
    json kept = json::array();
    for (const auto& t : tiles) {
      kept.push_back({t.spec.x_px, t.spec.y_px});
      if (!a.tiles_out.empty()) {
        write_png(t.pixels, fs::path(a.tiles_out) /
                                (e.slide_id + "_" + std::to_string(t.spec.x_px) + "_" + std::to_string(t.spec.y_px) + ".png"));
      }
    }
    slides.push_back({{"slide_id", e.slide_id}, {"grid", grid.size()}, {"kept", tiles.size()},
                      {"mpp", cfg.target_mpp}, {"tile_px", cfg.tile_px}, {"tiles", kept}});
  }
  emit({{"slides", slides}});
  return 0;
}

// ---- encode -----------------------------------------------------------------

struct EncodeArgs {
  Common common;
  std::string manifest;
  std::string out;
};

int run_encode(const EncodeArgs& a) {
  const auto spec = PipelineSpec::from_config(load_config(a.common));
  auto scout = make_encoder(spec.scout);
  fs::create_directories(a.out);
  json rows = json::array();
  int failed = 0;
  for (const auto& e : read_manifest(a.manifest)) {
    try {
      const auto m = scout_embeddings(load_slide(e), spec, *scout);
      cache_write(m, fs::path(a.out) / (e.slide_id + ".emb"));
      rows.push_back({{"slide_id", e.slide_id}, {"tiles", m.rows()}, {"dim", m.dim()}});
    } catch (const std::exception& ex) {
      ++failed;
      rows.push_back({{"slide_id", e.slide_id}, {"error", ex.what()}});
    }
  }
  emit({{"encoder", spec.scout.spec.name}, {"slides", rows}, {"failed", failed}});
  return failed == 0 ? 0 : 3;
}

// ---- select -----------------------------------------------------------------

struct SelectArgs {
  Common common;
  std::string embeddings;
  std::string head;
  std::optional<std::size_t> k;
};

int run_select(const SelectArgs& a) {
  auto spec = PipelineSpec::from_config(load_config(a.common));
  if (!a.head.empty()) spec.head_path = a.head;
  const auto m = cache_read(a.embeddings);
  spec.scout.spec.dim = m.dim();
  const auto head = pipeline_head(spec);
  const auto scores = attention_scores(head, m);
  const auto idx = select_top_k(scores, a.k.value_or(spec.k));
  double mass = 0;
  for (auto i : idx) mass += scores.scores[i];
  json tiles = json::array();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto& c = m.coords()[idx[r]];
    tiles.push_back({{"rank", r + 1}, {"row", idx[r]}, {"x_px", c.x_px}, {"y_px", c.y_px}, {"size_px", c.size_px},
                     {"mpp", c.mpp}, {"score", scores.scores[idx[r]]}, {"weight", scores.scores[idx[r]] / mass}});
  }
  emit({{"slide_id", m.slide_id()}, {"n_tiles", m.rows()}, {"k", idx.size()}, {"tiles", tiles}});
  return 0;
}

// ---- embed ------------------------------------------------------------------

struct EmbedArgs {
  Common common;
  std::string manifest;
  std::string run_dir;
  std::optional<std::size_t> workers;
  std::string head;
  std::string labels;
};

int run_embed(const EmbedArgs& a) {
  auto spec = PipelineSpec::from_config(load_config(a.common));
  if (a.workers) spec.workers = *a.workers;
  if (!a.head.empty()) spec.head_path = a.head;
  const auto result = run_pipeline(read_manifest(a.manifest), spec, a.run_dir);
  if (!a.labels.empty()) fs::copy_file(a.labels, fs::path(a.run_dir) / "labels.csv", fs::copy_options::overwrite_existing);
  emit({{"run_dir", a.run_dir},
        {"slides", result.outcomes.size()},
        {"embedded", result.slides.size()},
        {"patients", result.patients.size()},
        {"quarantined", result.quarantined()}});
  return result.quarantined() == 0 ? 0 : 3;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string kind = "head";
  std::string manifest;
  std::string labels;
  std::string embeddings;
  std::string out;
};

int train_head_cmd(const TrainArgs& a, const KeyValueConfig& cfg) {
  const auto spec = PipelineSpec::from_config(cfg);
  const auto task = ExperimentTask::from_config(cfg);
  auto scout = make_encoder(spec.scout);
  std::map<std::string, std::string> label_of;
  for (const auto& l : read_labels_csv(a.labels)) label_of[l.patient_id] = l.label;
  std::vector<std::string> names;
  for (const auto& [p, l] : label_of) {
    if (std::find(names.begin(), names.end(), l) == names.end()) names.push_back(l);
  }
  std::sort(names.begin(), names.end());
  if (task.positive_label && names.size() == 2 && names[1] != *task.positive_label) std::swap(names[0], names[1]);

  std::vector<LabeledBag> bags;
  for (const auto& e : read_manifest(a.manifest)) {
    const auto it = label_of.find(e.patient_id);
    if (it == label_of.end()) continue;
    if (!task.train_cohorts.empty() &&
        std::find(task.train_cohorts.begin(), task.train_cohorts.end(), e.cohort) == task.train_cohorts.end()) {
      continue;
    }
    const int label = static_cast<int>(std::find(names.begin(), names.end(), it->second) - names.begin());
    bags.push_back({scout_embeddings(load_slide(e), spec, *scout), label});
  }
  HeadTrainConfig hc;
  hc.hidden = spec.head_hidden;
  hc.seed = spec.head_seed;
  hc.lr = cfg.get_double("head.lr", hc.lr);
  hc.weight_decay = cfg.get_double("head.weight_decay", hc.weight_decay);
  hc.epochs = static_cast<int>(cfg.get_int("head.epochs", hc.epochs));
  const auto head = train_head(bags, hc);
  save_head(head, a.out);
  emit({{"kind", "head"}, {"bags", bags.size()}, {"classes", names}, {"out", a.out}});
  return 0;
}

int train_mlp_cmd(const TrainArgs& a, const KeyValueConfig& cfg) {
  const auto task = ExperimentTask::from_config(cfg);
  const auto data = build_dataset(read_table(a.embeddings), read_labels_csv(a.labels), task.positive_label);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.ids.size(); ++i) {
    const bool test = std::find(task.test_cohorts.begin(), task.test_cohorts.end(), data.cohorts[i]) != task.test_cohorts.end();
    const bool train = task.train_cohorts.empty() ||
                       std::find(task.train_cohorts.begin(), task.train_cohorts.end(), data.cohorts[i]) != task.train_cohorts.end();
    if (!test && train) rows.push_back(i);
  }
  const Dataset train_set = data.subset(rows);
  const auto folds = make_folds(train_set.y, task.n_folds, task.seed);
  fs::create_directories(a.out);
  json out = json::array();
  for (int f = 0; f < task.n_folds; ++f) {
    std::vector<std::size_t> tr, va;
    for (std::size_t i = 0; i < folds.size(); ++i) (folds[i] == f ? va : tr).push_back(i);
    const Dataset x = train_set.subset(tr), v = train_set.subset(va);
    TrainConfig tc = task.train;
    tc.seed = task.seed * 1000003ULL + static_cast<std::uint64_t>(f);
    auto res = train(make_mlp(static_cast<std::size_t>(data.x.cols()), data.class_names.size(), tc.seed, kMlpHidden, tc.dropout_p),
                     LabeledSet{x.x, x.y}, LabeledSet{v.x, v.y}, tc);
    const fs::path model_path = fs::path(a.out) / ("fold" + std::to_string(f) + ".bin");
    save_mlp(res.model, model_path);
    write_text(fs::path(a.out) / ("fold" + std::to_string(f) + "_history.json"), history_json(res.history));
    out.push_back({{"fold", f}, {"model", model_path.string()}, {"best_epoch", res.history.best_epoch},
                   {"stopped_early", res.history.stopped_early}});
  }
  emit({{"kind", "mlp"}, {"task", task.name}, {"classes", data.class_names}, {"folds", out}});
  return 0;
}

int run_train(const TrainArgs& a) {
  const auto cfg = load_config(a.common);
  if (a.kind == "head") {
    if (a.manifest.empty() || a.labels.empty()) throw Error(ErrorCode::kInvalidArgument, "head training needs --manifest and --labels");
    return train_head_cmd(a, cfg);
  }
  if (a.kind == "mlp") {
    if (a.embeddings.empty() || a.labels.empty()) throw Error(ErrorCode::kInvalidArgument, "mlp training needs --embeddings and --labels");
    return train_mlp_cmd(a, cfg);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown --kind '" + a.kind + "' (head or mlp)");
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::vector<std::string> models;  // name=path
  std::string labels;
  std::string out;
  std::string reference;
  std::vector<std::size_t> subsets;
};

int run_eval(const EvalArgs& a) {
  const auto cfg = load_config(a.common);
  const auto base = ExperimentTask::from_config(cfg);
  const auto labels = read_labels_csv(a.labels);
  std::vector<EvalReport> reports;
  std::string csv = metrics_csv_header();
  json summary = json::array();
  std::vector<std::optional<std::size_t>> sizes;
  if (a.subsets.empty()) sizes.push_back(base.subset_size);
  for (auto s : a.subsets) sizes.push_back(s);
  for (const auto& spec : a.models) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "--model expects name=path");
    const std::string name = spec.substr(0, eq);
    const auto data = build_dataset(read_table(spec.substr(eq + 1)), labels, base.positive_label);
    for (const auto& size : sizes) {
      ExperimentTask task = base;
      task.subset_size = size;
      if (size) task.name = base.name + "@" + std::to_string(*size);
      auto r = run_experiment(task, name, data);
      csv += to_csv(r, false);
      write_text(fs::path(a.out) / (task.name + "_" + name + ".json"), to_json(r));
      summary.push_back({{"task", task.name}, {"model", name}, {"skipped", r.skipped}, {"reason", r.skip_reason},
                         {"n_train", r.n_train}});
      reports.push_back(std::move(r));
    }
  }
  write_text(fs::path(a.out) / "metrics.csv", csv);
  json result = {{"reports", summary}, {"metrics", (fs::path(a.out) / "metrics.csv").string()}};
  if (!a.reference.empty()) {
    const auto cmp = compare_models(reports, a.reference);
    write_text(fs::path(a.out) / "significance.json", significance_json(cmp));
    result["significance"] = (fs::path(a.out) / "significance.json").string();
  }
  emit(result);
  return 0;
}

// ---- fewshot ----------------------------------------------------------------

struct FewshotArgs {
  Common common;
  std::string embeddings;
  std::string labels;
  std::string out;
};

int run_fewshot_cmd(const FewshotArgs& a) {
  const auto cfg = load_config(a.common);
  const auto task = ExperimentTask::from_config(cfg);
  ProbeConfig pc;
  pc.inverse_reg_c = cfg.get_double("probe.C", pc.inverse_reg_c);
  pc.max_iters = static_cast<int>(cfg.get_int("probe.max_iters", pc.max_iters));
  pc.repeats = static_cast<int>(cfg.get_int("probe.repeats", pc.repeats));
  pc.seed = static_cast<std::uint64_t>(cfg.get_int("probe.seed", static_cast<long long>(task.seed)));
  if (const auto ks = cfg.get_list("probe.ks"); !ks.empty()) {
    pc.ks.clear();
    for (const auto& k : ks) pc.ks.push_back(std::stoi(k));
  }
  const auto data = build_dataset(read_table(a.embeddings), read_labels_csv(a.labels), task.positive_label);
  const auto report = run_fewshot(task, data, pc);
  if (!a.out.empty()) write_text(a.out, report.to_json());
  json rows = json::array();
  for (const auto& r : report.rows) rows.push_back({{"k", r.k}, {"mean_auroc", r.mean_auroc}, {"sd_auroc", r.sd_auroc}});
  emit({{"task", report.task}, {"rows", rows}, {"fits", report.fits.size()}});
  return 0;
}

// ---- search -----------------------------------------------------------------

struct SearchArgs {
  std::string store;
  std::string id;
  std::size_t k = 3;
  std::string cohort;
};

int run_search(const SearchArgs& a) {
  const auto store = EmbeddingStore::load(a.store);
  SearchOptions opts;
  opts.top_k = a.k;
  if (!a.cohort.empty()) opts.cohort = a.cohort;
  const auto matches = store.search_by_id(a.id, opts);
  json arr = json::array();
  for (const auto& m : matches) {
    arr.push_back({{"id", m.id}, {"cohort", m.cohort}, {"similarity", m.similarity}, {"metadata", m.metadata}});
  }
  emit({{"query", a.id}, {"matches", arr}});
  return 0;
}

// ---- profile ----------------------------------------------------------------

struct ProfileArgs {
  Common common;
  std::string costs = "data/encoder_costs.toml";
  std::string scout = "ctranspath";
  double scout_mpp = 2.0;
  std::string detail = "virchow2";
  std::size_t k = 25;
  std::string baseline = "virchow2";
  double baseline_mpp = 0.5;
  std::string manifest;
  int reps = 3;
  std::string out = "profile";
};

int run_profile(const ProfileArgs& a) {
  const auto cost = CostModel::load(a.costs);
  const auto eagle_plan = two_tier_plan(cost, a.scout, a.scout_mpp, a.detail, a.k);
  const auto eagle = estimate_flops(cost, eagle_plan);
  const auto base = estimate_flops(cost, full_slide_plan(cost, a.baseline, a.baseline_mpp));

  json j = {{"eagle", {{"scout", a.scout}, {"scout_mpp", a.scout_mpp}, {"detail", a.detail}, {"k", a.k},
                       {"flops_per_wsi", eagle.per_wsi}}},
            {"baseline", {{"encoder", a.baseline}, {"mpp", a.baseline_mpp}, {"flops_per_wsi", base.per_wsi}}},
            {"ratio", eagle.per_wsi / base.per_wsi},
            {"reduction_pct", 100.0 * (1.0 - eagle.per_wsi / base.per_wsi)}};
  std::string csv = "model,mpp,flops_per_tile,tiles_per_wsi,flops_per_wsi,reference_flops_per_wsi,ratio_to_baseline\n";
  json encoders = json::array();
  for (const auto& [name, fpt] : cost.flops_per_tile) {
    for (const auto& [mpp, tiles] : cost.tiles_per_wsi) {
      const double per = estimate_flops(cost, full_slide_plan(cost, name, mpp)).per_wsi;
      char key[64], key1[64];
      std::snprintf(key, sizeof key, "%s@%g", name.c_str(), mpp);
      std::snprintf(key1, sizeof key1, "%s@%.1f", name.c_str(), mpp);
      auto ref = cost.reference_flops_per_wsi.find(key);
      if (ref == cost.reference_flops_per_wsi.end()) ref = cost.reference_flops_per_wsi.find(key1);
      char refs[32] = "";
      if (ref != cost.reference_flops_per_wsi.end()) std::snprintf(refs, sizeof refs, "%.6g", ref->second);
      char line[256];
      std::snprintf(line, sizeof line, "%s,%g,%.6g,%.6g,%.6g,%s,%.6g\n", name.c_str(), mpp, fpt, tiles, per, refs,
                    per / base.per_wsi);
      csv += line;
      encoders.push_back({{"model", name}, {"mpp", mpp}, {"flops_per_wsi", per}});
    }
  }
  char line[256];
  std::snprintf(line, sizeof line, "eagle(%s@%g+%zux%s),%g,,,%.6g,,%.6g\n", a.scout.c_str(), a.scout_mpp, a.k,
                a.detail.c_str(), a.scout_mpp, eagle.per_wsi, eagle.per_wsi / base.per_wsi);
  csv += line;
  j["encoders"] = encoders;

  if (!a.manifest.empty()) {
    // wall time on representative slides of the manifest
    const auto spec = PipelineSpec::from_config(load_config(a.common));
    const auto manifest = read_manifest(a.manifest);
    std::vector<SlideTileCount> counts;
    std::map<std::string, const ManifestEntry*> by_id;
    for (const auto& e : manifest) {
      counts.push_back({e.slide_id, static_cast<double>(plan_grid(rescale(load_slide(e), spec.scout.mpp), spec.scout_tessellation()).size())});
      by_id[e.slide_id] = &e;
    }
    const auto sample = percentile_sample(counts, std::min<std::size_t>(25, counts.size()));
    auto scout = make_encoder(spec.scout);
    auto detail = make_encoder(spec.detail);
    const auto head = pipeline_head(spec);
    std::vector<SlideImage> slides;
    for (const auto& id : sample.slide_ids) slides.push_back(load_slide(*by_id.at(id)));
    std::map<std::string, double> per_wsi_ms;
    const auto full = time_stage([&] {
      for (const auto& s : slides) scout_embeddings(s, spec, *detail);
    }, a.reps);
    const auto two_tier = time_stage([&] {
      for (const auto& s : slides) {
        const auto m = scout_embeddings(s, spec, *scout);
        const auto idx = select_top_k(attention_scores(head, m), spec.k);
        std::vector<Tile> tiles;
        for (auto i : idx) tiles.push_back(detail_crop(s, m.coords()[i], spec.detail.mpp, spec.detail.spec.tile_px));
        detail->encode(s.slide_id, tiles);
      }
    }, a.reps);
    const double n = static_cast<double>(slides.size());
    per_wsi_ms["detail_all_tiles"] = full.mean_ms / n;
    per_wsi_ms["eagle"] = two_tier.mean_ms / n;
    j["timing"] = {{"slides", sample.slide_ids},
                   {"percentiles", sample.percentiles},
                   {"has_duplicates", sample.has_duplicates},
                   {"per_wsi_ms", per_wsi_ms},
                   {"median_ms", {{"detail_all_tiles", full.median_ms / n}, {"eagle", two_tier.median_ms / n}}},
                   {"normalized", normalize_to(per_wsi_ms, "detail_all_tiles")}};
  }
  write_text(a.out + ".json", j.dump(2) + "\n");
  write_text(a.out + ".csv", csv);
  emit(j);
  return 0;
}

// ---- serve ------------------------------------------------------------------

struct ServeArgs {
  std::string run_dir;
  std::string host = "127.0.0.1";
  int port = 8000;
  std::size_t threads = 4;
};

int run_serve(const ServeArgs& a) {
  Service service({a.run_dir, a.host, a.port, a.threads});
  const int port = service.start();
  std::cerr << "serving " << a.run_dir << " on http://" << a.host << ":" << port << "\n";
  service.run();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-tier whole-slide embedding pipeline"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic planted-signal cohort");
  c_synth->add_option("--out", synth.out, "output directory")->required();
  c_synth->add_option("--cohort", synth.cohort, "cohort name");
  c_synth->add_option("--per-class", synth.per_class, "slides per class");
  c_synth->add_option("--seed", synth.seed);
  int grid = synth.slide.grid_cols;
  c_synth->add_option("--grid", grid, "cells per side");
  c_synth->add_option("--cell-px", synth.slide.cell_px);
  c_synth->add_option("--mpp", synth.slide.raster_mpp);
  c_synth->add_option("--signal-fraction", synth.slide.signal_fraction);
  c_synth->add_option("--background-fraction", synth.slide.background_fraction);

  TessellateArgs tess;
  auto* c_tess = app.add_subcommand("tessellate", "Grid slides at the scout resolution and filter background");
  add_common(c_tess, tess.common);
  c_tess->add_option("--manifest", tess.manifest)->required()->check(CLI::ExistingFile);
  c_tess->add_option("--tiles-out", tess.tiles_out, "directory for kept tile PNGs");

  EncodeArgs enc;
  auto* c_enc = app.add_subcommand("encode", "Scout-encode every slide of a manifest");
  add_common(c_enc, enc.common);
  c_enc->add_option("--manifest", enc.manifest)->required()->check(CLI::ExistingFile);
  c_enc->add_option("--out", enc.out, "directory for <slide>.emb files")->required();

  SelectArgs sel;
  auto* c_sel = app.add_subcommand("select", "Attention top-k over one scout embedding file");
  add_common(c_sel, sel.common);
  c_sel->add_option("--embeddings", sel.embeddings)->required()->check(CLI::ExistingFile);
  c_sel->add_option("--head", sel.head, "attention head file (default: seeded random head)");
  c_sel->add_option("-k,--k", sel.k);

  EmbedArgs emb;
  auto* c_emb = app.add_subcommand("embed", "Run the full two-tier pipeline into a run directory");
  add_common(c_emb, emb.common);
  c_emb->add_option("--manifest", emb.manifest)->required()->check(CLI::ExistingFile);
  c_emb->add_option("--run-dir", emb.run_dir)->required();
  c_emb->add_option("--workers", emb.workers);
  c_emb->add_option("--head", emb.head);
  c_emb->add_option("--labels", emb.labels, "labels CSV published with the run for the API")->check(CLI::ExistingFile);

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train the attention head or the fold MLPs");
  add_common(c_tr, tr.common);
  c_tr->add_option("--kind", tr.kind, "head or mlp")->check(CLI::IsMember({"head", "mlp"}));
  c_tr->add_option("--manifest", tr.manifest);
  c_tr->add_option("--labels", tr.labels)->check(CLI::ExistingFile);
  c_tr->add_option("--embeddings", tr.embeddings);
  c_tr->add_option("--out", tr.out)->required();

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Cross-validated training and external evaluation");
  add_common(c_ev, ev.common);
  c_ev->add_option("--model", ev.models, "name=embeddings.emb (repeatable)")->required();
  c_ev->add_option("--labels", ev.labels)->required()->check(CLI::ExistingFile);
  c_ev->add_option("--out", ev.out, "report directory")->required();
  c_ev->add_option("--reference", ev.reference, "model compared against all others");
  c_ev->add_option("--subset", ev.subsets, "training subset sizes, e.g. 300 150 75");

  FewshotArgs fs_args;
  auto* c_fs = app.add_subcommand("fewshot", "Few-shot logistic-regression probing");
  add_common(c_fs, fs_args.common);
  c_fs->add_option("--embeddings", fs_args.embeddings)->required()->check(CLI::ExistingFile);
  c_fs->add_option("--labels", fs_args.labels)->required()->check(CLI::ExistingFile);
  c_fs->add_option("--out", fs_args.out, "JSON report path");

  SearchArgs se;
  auto* c_se = app.add_subcommand("search", "Cosine search in a slide store");
  c_se->add_option("--store", se.store)->required()->check(CLI::ExistingFile);
  c_se->add_option("--id", se.id)->required();
  c_se->add_option("-k,--k", se.k);
  c_se->add_option("--cohort", se.cohort);

  ProfileArgs pr;
  auto* c_pr = app.add_subcommand("profile", "FLOPs accounting and stage timing");
  add_common(c_pr, pr.common);
  c_pr->add_option("--costs", pr.costs)->check(CLI::ExistingFile);
  c_pr->add_option("--scout", pr.scout);
  c_pr->add_option("--scout-mpp", pr.scout_mpp);
  c_pr->add_option("--detail", pr.detail);
  c_pr->add_option("-k,--k", pr.k);
  c_pr->add_option("--baseline", pr.baseline);
  c_pr->add_option("--baseline-mpp", pr.baseline_mpp);
  c_pr->add_option("--manifest", pr.manifest, "time the stages on representative slides")->check(CLI::ExistingFile);
  c_pr->add_option("--reps", pr.reps);
  c_pr->add_option("--out", pr.out, "output prefix for .json and .csv");

  ServeArgs sv;
  auto* c_sv = app.add_subcommand("serve", "Read-only HTTP API over a run directory");
  c_sv->add_option("--run-dir", sv.run_dir)->required()->check(CLI::ExistingDirectory);
  c_sv->add_option("--host", sv.host);
  c_sv->add_option("--port", sv.port);
  c_sv->add_option("--threads", sv.threads);

  CLI11_PARSE(app, argc, argv);

  synth.slide.grid_cols = synth.slide.grid_rows = grid;
  try {
    if (c_synth->parsed()) return run_synth(synth);
    if (c_tess->parsed()) return run_tessellate(tess);
    if (c_enc->parsed()) return run_encode(enc);
    if (c_sel->parsed()) return run_select(sel);
    if (c_emb->parsed()) return run_embed(emb);
    if (c_tr->parsed()) return run_train(tr);
    if (c_ev->parsed()) return run_eval(ev);
    if (c_fs->parsed()) return run_fewshot_cmd(fs_args);
    if (c_se->parsed()) return run_search(se);
    if (c_pr->parsed()) return run_profile(pr);
    if (c_sv->parsed()) return run_serve(sv);
  } catch (const Error& e) {
    std::cerr << "eagle: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "eagle: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
