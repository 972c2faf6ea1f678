#include "eagle/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "eagle/error.hpp"

namespace eagle {

namespace {

using Color = std::array<double, 3>;

struct Texture {
  Color base;
  Color nucleus;
  double density;  // nuclei per pixel
  double radius_lo, radius_hi;
  double noise;
};

std::uint8_t clamp8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

void paint_cell(RgbImage& img, int x0, int y0, int size, const Texture& t, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, t.noise);
  for (int y = y0; y < y0 + size; ++y) {
    for (int x = x0; x < x0 + size; ++x) {
      const double n = noise(rng);
      img.set(x, y, clamp8(t.base[0] + n), clamp8(t.base[1] + n), clamp8(t.base[2] + n));
    }
  }
  std::poisson_distribution<int> count(t.density * size * size);
  const int nuclei = count(rng);
  for (int k = 0; k < nuclei; ++k) {
    const double cx = x0 + u(rng) * size, cy = y0 + u(rng) * size;
    const double r = t.radius_lo + u(rng) * (t.radius_hi - t.radius_lo);
    const int lo_x = std::max(x0, static_cast<int>(std::floor(cx - r)));
    const int hi_x = std::min(x0 + size - 1, static_cast<int>(std::ceil(cx + r)));
    const int lo_y = std::max(y0, static_cast<int>(std::floor(cy - r)));
    const int hi_y = std::min(y0 + size - 1, static_cast<int>(std::ceil(cy + r)));
    for (int y = lo_y; y <= hi_y; ++y) {
      for (int x = lo_x; x <= hi_x; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        if (dx * dx + dy * dy <= r * r) img.set(x, y, clamp8(t.nucleus[0]), clamp8(t.nucleus[1]), clamp8(t.nucleus[2]));
      }
    }
  }
}

}  // namespace

SyntheticSlide make_synthetic_slide(const std::string& slide_id, int label, std::uint64_t seed,
                                    const SyntheticSlideConfig& cfg) {
  if (cfg.grid_cols <= 0 || cfg.grid_rows <= 0 || cfg.cell_px <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic grid must be positive");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  // per-slide stain and density variation
  const Color shift = {cfg.stain_jitter * u(rng), cfg.stain_jitter * u(rng), cfg.stain_jitter * u(rng)};
  const double density_scale = 1.0 + cfg.density_jitter * u(rng);
  const double contrast = 1.0 + 0.25 * u(rng);
  auto stained = [&](Color c) {
    for (std::size_t i = 0; i < 3; ++i) c[i] += shift[i];
    return c;
  };
  auto darker = [&](Color c) {
    for (double& v : c) v = 255.0 - (255.0 - v) * contrast;
    return c;
  };
  const Texture normal{stained({232, 160, 196}), darker(stained({96, 50, 134})), 0.005 * density_scale, 2.4, 3.4, 6.0};
  const Texture signal{stained({196, 112, 170}), darker(stained({52, 18, 84})), 0.014 * density_scale, 2.6, 3.8, 6.0};

  const int n_cells = cfg.grid_cols * cfg.grid_rows;
  std::vector<int> order(static_cast<std::size_t>(n_cells));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_background = static_cast<int>(std::lround(cfg.background_fraction * n_cells));
  const int n_signal = label == 1 ? static_cast<int>(std::lround(cfg.signal_fraction * n_cells)) : 0;
  std::vector<char> kind(static_cast<std::size_t>(n_cells), 'n');
  for (int i = 0; i < n_background; ++i) kind[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 'b';
  for (int i = n_background; i < n_background + n_signal && i < n_cells; ++i) {
    kind[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 's';
  }

  SyntheticSlide out;
  out.label = label;
  RgbImage img(cfg.grid_cols * cfg.cell_px, cfg.grid_rows * cfg.cell_px, 255);
  for (int row = 0; row < cfg.grid_rows; ++row) {
    for (int col = 0; col < cfg.grid_cols; ++col) {
      const char k = kind[static_cast<std::size_t>(row * cfg.grid_cols + col)];
      const int x0 = col * cfg.cell_px, y0 = row * cfg.cell_px;
      if (k == 'b') {
        out.background.push_back({col, row});
        continue;  // stays white
      }
      if (k == 's') out.planted.push_back({col, row});
      paint_cell(img, x0, y0, cfg.cell_px, k == 's' ? signal : normal, rng);
    }
  }
  out.slide = SlideImage{slide_id, std::move(img), cfg.raster_mpp, ""};
  return out;
}

bool is_planted(const SyntheticSlide& s, const TileSpec& spec, double raster_mpp, int cell_px) {
  // tile extent in raster pixels
  const double f = spec.mpp / raster_mpp;
  const double x0 = spec.x_px * f, y0 = spec.y_px * f, x1 = x0 + spec.size_px * f, y1 = y0 + spec.size_px * f;
  const double area = (x1 - x0) * (y1 - y0);
  for (const auto& c : s.planted) {
    const double cx0 = c.col * cell_px, cy0 = c.row * cell_px;
    const double ox = std::max(0.0, std::min(x1, cx0 + cell_px) - std::max(x0, cx0));
    const double oy = std::max(0.0, std::min(y1, cy0 + cell_px) - std::max(y0, cy0));
    if (ox * oy > 0.5 * area) return true;
  }
  return false;
}

std::vector<SyntheticCohortEntry> write_synthetic_cohort(const std::filesystem::path& dir, const std::string& cohort,
                                                         int n_per_class, std::uint64_t seed,
                                                         const SyntheticSlideConfig& cfg) {
  std::filesystem::create_directories(dir / "slides");
  std::vector<SyntheticCohortEntry> entries;
  std::ofstream manifest(dir / "manifest.jsonl", std::ios::trunc);
  std::ofstream labels(dir / "labels.csv", std::ios::trunc);
  if (!manifest || !labels) throw Error(ErrorCode::kIoError, "cannot write cohort files under " + dir.string());
  labels << "patient_id,label,cohort\n";
  int index = 0;
  for (int i = 0; i < n_per_class; ++i) {
    for (int label = 0; label < 2; ++label, ++index) {
      SyntheticCohortEntry e;
      e.slide_id = cohort + "_s" + std::to_string(index);
      e.patient_id = cohort + "_p" + std::to_string(index);
      e.cohort = cohort;
      e.label = label;
      e.mpp = cfg.raster_mpp;
      const auto relative = std::filesystem::path("slides") / (e.slide_id + ".png");
      e.path = dir / relative;
      const auto s = make_synthetic_slide(e.slide_id, label, seed * 7919ULL + static_cast<std::uint64_t>(index), cfg);
      write_png(s.slide.pixels, e.path);
      manifest << nlohmann::json{{"slide_id", e.slide_id},
                                 {"patient_id", e.patient_id},
                                 {"cohort", e.cohort},
                                 {"path", relative.string()},
                                 {"mpp", e.mpp}}
                      .dump()
               << "\n";
      labels << e.patient_id << "," << (label == 1 ? "positive" : "negative") << "," << cohort << "\n";
      entries.push_back(e);
    }
  }
  return entries;
}

}  // namespace eagle
