#include "eagle/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eagle/error.hpp"

namespace eagle {

std::string to_string(SlideSource s) {
  switch (s) {
    case SlideSource::kEagleMean: return "eagle_mean";
    case SlideSource::kEagleWeighted: return "eagle_weighted";
    case SlideSource::kMeanPool: return "mean_pool";
  }
  return "unknown";
}

std::string to_string(PatientStrategy s) {
  return s == PatientStrategy::kJoint ? "joint" : "average_slides";
}

SlideSource parse_slide_source(const std::string& s) {
  if (s == "eagle_mean" || s == "mean") return SlideSource::kEagleMean;
  if (s == "eagle_weighted" || s == "weighted") return SlideSource::kEagleWeighted;
  if (s == "mean_pool") return SlideSource::kMeanPool;
  throw Error(ErrorCode::kInvalidArgument, "unknown aggregation mode '" + s + "'");
}

PatientStrategy parse_patient_strategy(const std::string& s) {
  if (s == "average_slides" || s == "average") return PatientStrategy::kAverageSlides;
  if (s == "joint") return PatientStrategy::kJoint;
  throw Error(ErrorCode::kInvalidArgument, "unknown patient strategy '" + s + "'");
}

namespace {

SlideEmbedding weighted_mean(const EmbeddingMatrix& m, std::span<const double> w, SlideSource source) {
  std::vector<double> acc(m.dim(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    for (std::size_t d = 0; d < m.dim(); ++d) acc[d] += w[i] * r[d];
  }
  SlideEmbedding e{m.slide_id(), std::vector<float>(m.dim()), m.encoder(), m.rows(), source};
  for (std::size_t d = 0; d < m.dim(); ++d) e.vector[d] = static_cast<float>(acc[d]);
  return e;
}

}  // namespace

SlideEmbedding eagle_slide_embedding(const EmbeddingMatrix& selected) {
  if (selected.empty()) throw Error(ErrorCode::kEmptySelection, "no selected tiles for " + selected.slide_id());
  const std::vector<double> w(selected.rows(), 1.0 / static_cast<double>(selected.rows()));
  return weighted_mean(selected, w, SlideSource::kEagleMean);
}

SlideEmbedding weighted_slide_embedding(const EmbeddingMatrix& selected, std::span<const double> weights) {
  if (selected.empty()) throw Error(ErrorCode::kEmptySelection, "no selected tiles for " + selected.slide_id());
  if (weights.size() != selected.rows()) {
    throw Error(ErrorCode::kLengthMismatch, "one weight per selected row required");
  }
  double total = 0;
  for (double w : weights) {
    if (!(w >= 0) || !std::isfinite(w)) throw Error(ErrorCode::kInvalidArgument, "weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0)) throw Error(ErrorCode::kInvalidArgument, "weights sum to zero");
  std::vector<double> w(weights.begin(), weights.end());
  for (double& v : w) v /= total;
  return weighted_mean(selected, w, SlideSource::kEagleWeighted);
}

SlideEmbedding mean_pool_all(const EmbeddingMatrix& m) {
  if (m.empty()) throw Error(ErrorCode::kEmptyMatrix, "slide " + m.slide_id() + " has no tiles");
  const std::vector<double> w(m.rows(), 1.0 / static_cast<double>(m.rows()));
  return weighted_mean(m, w, SlideSource::kMeanPool);
}

PatientEmbedding average_slides(const std::string& patient_id, std::span<const SlideEmbedding> slides) {
  if (slides.empty()) throw Error(ErrorCode::kEmptyInput, "patient " + patient_id + " has no slides");
  const std::size_t dim = slides.front().vector.size();
  std::vector<double> acc(dim, 0.0);
  PatientEmbedding p;
  p.patient_id = patient_id;
  p.strategy = PatientStrategy::kAverageSlides;
  p.encoder = slides.front().encoder;
  for (const auto& s : slides) {
    if (s.vector.size() != dim) {
      throw Error(ErrorCode::kMixedEncoders, "patient " + patient_id + " mixes embedding dims");
    }
    for (std::size_t d = 0; d < dim; ++d) acc[d] += s.vector[d];
    p.slide_ids.push_back(s.slide_id);
  }
  p.vector.resize(dim);
  for (std::size_t d = 0; d < dim; ++d) p.vector[d] = static_cast<float>(acc[d] / static_cast<double>(slides.size()));
  return p;
}

std::vector<JointPick> joint_select(const AttentionHead& head, std::span<const EmbeddingMatrix> scouts,
                                    std::size_t k, std::size_t row_cap) {
  if (scouts.empty()) throw Error(ErrorCode::kEmptyInput, "no slides for joint selection");
  const std::size_t dim = scouts.front().dim();
  std::vector<std::pair<std::size_t, std::size_t>> where;
  for (std::size_t s = 0; s < scouts.size(); ++s) {
    if (scouts[s].dim() != dim) throw Error(ErrorCode::kMixedEncoders, "scout dims differ across slides");
    for (std::size_t r = 0; r < scouts[s].rows(); ++r) where.emplace_back(s, r);
  }
  if (where.empty()) throw Error(ErrorCode::kEmptySelection, "patient has no tiles");

  if (row_cap > 0 && where.size() > row_cap) {
    std::vector<double> var(where.size());
    for (std::size_t i = 0; i < where.size(); ++i) {
      const auto r = scouts[where[i].first].row(where[i].second);
      double mean = 0, sq = 0;
      for (float v : r) {
        mean += v;
        sq += static_cast<double>(v) * v;
      }
      mean /= static_cast<double>(dim);
      var[i] = sq / static_cast<double>(dim) - mean * mean;
    }
    std::vector<std::size_t> keep(where.size());
    std::iota(keep.begin(), keep.end(), std::size_t{0});
    std::stable_sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) { return var[a] > var[b]; });
    keep.resize(row_cap);
    std::sort(keep.begin(), keep.end());
    std::vector<std::pair<std::size_t, std::size_t>> kept;
    kept.reserve(keep.size());
    for (std::size_t i : keep) kept.push_back(where[i]);
    where = std::move(kept);
  }

  EmbeddingMatrix pooled("", scouts.front().encoder(), dim);
  pooled.reserve(where.size());
  for (const auto& [s, r] : where) pooled.append(scouts[s].row(r), scouts[s].coords()[r]);
  AttentionScores scores = attention_scores(head, pooled);
  scores.coords.clear();  // ties resolve by pooled order: slide, then row
  std::vector<JointPick> picks;
  for (std::size_t i : select_top_k(scores, k)) picks.push_back({where[i].first, where[i].second, scores.scores[i]});
  return picks;
}

std::vector<float> mean_of_picks(std::span<const EmbeddingMatrix> details, std::span<const JointPick> picks) {
  if (picks.empty()) throw Error(ErrorCode::kEmptySelection, "no picks");
  const std::size_t dim = details[picks.front().slide].dim();
  std::vector<double> acc(dim, 0.0);
  for (const auto& p : picks) {
    const auto& m = details[p.slide];
    if (m.dim() != dim) throw Error(ErrorCode::kMixedEncoders, "detail dims differ across slides");
    const auto r = m.row(p.row);
    for (std::size_t d = 0; d < dim; ++d) acc[d] += r[d];
  }
  std::vector<float> out(dim);
  for (std::size_t d = 0; d < dim; ++d) out[d] = static_cast<float>(acc[d] / static_cast<double>(picks.size()));
  return out;
}

PatientEmbedding joint_patient_embedding(const std::string& patient_id, const AttentionHead& head,
                                         std::span<const EmbeddingMatrix> scouts,
                                         std::span<const EmbeddingMatrix> details, std::size_t k,
                                         std::size_t row_cap) {
  if (scouts.size() != details.size()) {
    throw Error(ErrorCode::kLengthMismatch, "scout and detail slide lists differ");
  }
  for (std::size_t s = 0; s < scouts.size(); ++s) {
    if (scouts[s].rows() != details[s].rows()) {
      throw Error(ErrorCode::kShapeMismatch, "detail rows must align with scout rows");
    }
  }
  const auto picks = joint_select(head, scouts, k, row_cap);
  PatientEmbedding p;
  p.patient_id = patient_id;
  p.strategy = PatientStrategy::kJoint;
  p.vector = mean_of_picks(details, picks);
  p.encoder = details.front().encoder();
  for (const auto& m : scouts) p.slide_ids.push_back(m.slide_id());
  return p;
}

}  // namespace eagle
