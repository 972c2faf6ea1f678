#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "eagle/embedding.hpp"

namespace eagle {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Gated attention-MIL parameters: logit(h) = w . (tanh(V h) * sigmoid(U h)).
struct AttentionHead {
  RowMatrixF V;  // L x M
  RowMatrixF U;  // L x M
  Eigen::VectorXf w;  // L

  std::size_t hidden() const noexcept { return static_cast<std::size_t>(V.rows()); }
  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(V.cols()); }

  /// Throws ShapeMismatch / InvalidArgument on inconsistent or non-finite parameters.
  void validate() const;

  friend bool operator==(const AttentionHead& a, const AttentionHead& b) {
    return a.V == b.V && a.U == b.U && a.w == b.w;
  }
};

/// Softmax-normalized per-tile relevance, aligned to the scored matrix rows.
struct AttentionScores {
  std::string slide_id;
  std::vector<double> scores;
  std::vector<TileSpec> coords;
};

/// Raw gated-attention logits, one per row.
std::vector<double> attention_logits(const AttentionHead& head, const EmbeddingMatrix& m);

/// Max-subtracted softmax of the logits. Throws DimMismatch or EmptyMatrix.
AttentionScores attention_scores(const AttentionHead& head, const EmbeddingMatrix& m);

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

/// Indices of the k highest scores, descending. Ties go to the tile earlier in
/// row-major coordinate order, then to the lower index. k >= N returns all rows.
std::vector<std::size_t> select_top_k(const AttentionScores& scores, std::size_t k);

AttentionHead random_head(std::uint64_t seed, std::size_t hidden, std::size_t input_dim);
void save_head(const AttentionHead& head, const std::filesystem::path& path);
AttentionHead load_head(const std::filesystem::path& path);

struct LabeledBag {
  EmbeddingMatrix embeddings;
  int label = 0;
};

struct HeadTrainConfig {
  std::size_t hidden = 256;
  double lr = 1e-4;
  double weight_decay = 1e-2;
  int epochs = 32;
  std::uint64_t seed = 0;
  bool class_weighted = true;
};

/// Weak-label MIL training: the head and a linear classifier on the
/// attention-pooled bag embedding are fitted jointly with cross-entropy and
/// AdamW, one bag per step. Only the head is returned.
AttentionHead train_head(std::span<const LabeledBag> bags, const HeadTrainConfig& cfg);

/// Same, starting from a given head.
AttentionHead train_head(std::span<const LabeledBag> bags, const HeadTrainConfig& cfg,
                         AttentionHead init);

}  // namespace eagle
