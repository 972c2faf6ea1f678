#pragma once

#include <span>
#include <string>
#include <vector>

#include "eagle/attention.hpp"
#include "eagle/embedding.hpp"

namespace eagle {

enum class SlideSource { kEagleMean, kEagleWeighted, kMeanPool };
enum class PatientStrategy { kAverageSlides, kJoint };

std::string to_string(SlideSource s);
std::string to_string(PatientStrategy s);
SlideSource parse_slide_source(const std::string& s);
PatientStrategy parse_patient_strategy(const std::string& s);

struct SlideEmbedding {
  std::string slide_id;
  std::vector<float> vector;
  std::string encoder;
  std::size_t k_used = 0;
  SlideSource source = SlideSource::kEagleMean;
};

struct PatientEmbedding {
  std::string patient_id;
  std::vector<float> vector;
  PatientStrategy strategy = PatientStrategy::kAverageSlides;
  std::vector<std::string> slide_ids;
  std::string encoder;
};

/// Equal-weight mean of the detail embeddings of the selected tiles.
/// Throws EmptySelection.
SlideEmbedding eagle_slide_embedding(const EmbeddingMatrix& selected_detail);

/// sum_i w_i h_i with the weights renormalized over the selected rows (e.g.
/// the attention scores restricted to the top-k). Throws EmptySelection.
SlideEmbedding weighted_slide_embedding(const EmbeddingMatrix& selected_detail,
                                        std::span<const double> weights);

/// Mean over every tile of the slide. Throws EmptyMatrix.
SlideEmbedding mean_pool_all(const EmbeddingMatrix& m);

/// Mean of the slide vectors. Throws MixedEncoders when dims differ.
PatientEmbedding average_slides(const std::string& patient_id, std::span<const SlideEmbedding> slides);

struct JointPick {
  std::size_t slide = 0;
  std::size_t row = 0;
  double score = 0;
};

inline constexpr std::size_t kJointRowCap = 15000;

/// Pools the scout matrices of one patient, scores them once with `head` and
/// picks the global top-k. When the pool exceeds `row_cap` rows only the
/// row_cap highest-variance rows are scored. Picks are in descending score
/// order; ties fall to the earlier slide, then the earlier row.
std::vector<JointPick> joint_select(const AttentionHead& head, std::span<const EmbeddingMatrix> scouts,
                                    std::size_t k, std::size_t row_cap = kJointRowCap);

/// Joint strategy with detail matrices row-aligned to the scout matrices.
PatientEmbedding joint_patient_embedding(const std::string& patient_id, const AttentionHead& head,
                                         std::span<const EmbeddingMatrix> scouts,
                                         std::span<const EmbeddingMatrix> details, std::size_t k,
                                         std::size_t row_cap = kJointRowCap);

/// Mean of rows gathered from several matrices.
std::vector<float> mean_of_picks(std::span<const EmbeddingMatrix> details, std::span<const JointPick> picks);

}  // namespace eagle
