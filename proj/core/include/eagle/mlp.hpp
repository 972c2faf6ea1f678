#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace eagle {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// One-hidden-layer classifier: logits = SiLU(x W1 + b1) W2 + b2, with
/// inverted dropout on the hidden layer during training.
template <typename Scalar>
struct BasicMlp {
  RowMatrix<Scalar> W1;  // in_dim x hidden
  Vector<Scalar> b1;     // hidden
  RowMatrix<Scalar> W2;  // hidden x classes
  Vector<Scalar> b2;     // classes
  double dropout_p = 0.25;

  std::size_t in_dim() const noexcept { return static_cast<std::size_t>(W1.rows()); }
  std::size_t hidden() const noexcept { return static_cast<std::size_t>(W1.cols()); }
  std::size_t classes() const noexcept { return static_cast<std::size_t>(W2.cols()); }

  template <typename Other>
  BasicMlp<Other> cast() const {
    return {W1.template cast<Other>(), b1.template cast<Other>(), W2.template cast<Other>(),
            b2.template cast<Other>(), dropout_p};
  }
};

using MlpModel = BasicMlp<float>;

inline constexpr std::size_t kMlpHidden = 256;

/// PyTorch-style uniform(+-1/sqrt(fan_in)) initialization.
MlpModel make_mlp(std::size_t in_dim, std::size_t classes, std::uint64_t seed,
                  std::size_t hidden = kMlpHidden, double dropout_p = 0.25);

/// Eval-mode logits (no dropout). Throws DimMismatch on a width mismatch.
RowMatrix<float> forward(const MlpModel& model, const RowMatrix<float>& x);
RowMatrix<double> forward(const BasicMlp<double>& model, const RowMatrix<double>& x);
/// Row-wise softmax of the eval-mode logits.
RowMatrix<float> predict_proba(const MlpModel& model, const RowMatrix<float>& x);

template <typename Scalar>
struct MlpGradients {
  RowMatrix<Scalar> W1;
  Vector<Scalar> b1;
  RowMatrix<Scalar> W2;
  Vector<Scalar> b2;
};

/// Class-weighted mean cross-entropy, sum_i w_{y_i} CE_i / sum_i w_{y_i}, and
/// its analytic gradient. `hidden_mask` (batch x hidden, already scaled by
/// 1/(1-p)) applies dropout; pass nullptr for eval mode.
template <typename Scalar>
Scalar loss_and_gradients(const BasicMlp<Scalar>& model, const RowMatrix<Scalar>& x,
                          std::span<const int> labels, std::span<const double> class_weight,
                          const RowMatrix<Scalar>* hidden_mask, MlpGradients<Scalar>* grads);

/// Balanced weights n / (C * n_c) over the classes present. Absent classes
/// (ids below the maximum label with no samples) get weight 0.
std::vector<double> class_weights(std::span<const int> labels, int n_classes = 0);

struct TrainConfig {
  double lr_max = 1e-4;
  double weight_decay = 1e-2;
  int epochs = 32;
  std::size_t batch = 64;
  int patience = 8;
  std::uint64_t seed = 0;
  double warmup_frac = 0.25;
  double div = 25.0;
  double final_div = 1e4;
  double dropout_p = 0.25;
  bool class_weighted = true;
  enum class Monitor { kAuroc, kLoss } monitor = Monitor::kAuroc;
};

/// Cosine warm-up from lr_max/div to lr_max over the first warmup_frac of
/// the steps, then cosine decay to lr_max/(div*final_div) at the last step.
double one_cycle_lr(std::size_t step, std::size_t total_steps, const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_auroc = 0;
  double monitored = 0;
  double lr = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  bool stopped_early = false;
};

struct LabeledSet {
  RowMatrix<float> x;
  std::vector<int> y;
};

/// Optional validation override; higher is better. Used to probe the
/// early-stopping rule in isolation.
using ValScorer = std::function<double(const MlpModel&, int epoch)>;

struct TrainResult {
  MlpModel model;
  TrainHistory history;
};

/// Trains from `init` and returns the best-validation checkpoint.
TrainResult train(MlpModel init, const LabeledSet& train_set, const LabeledSet& val_set,
                  const TrainConfig& cfg, const ValScorer& scorer = {});

/// Max relative error between analytic gradients and central differences
/// (step 1e-4) in float64, over up to `max_coords` sampled coordinates per
/// tensor. Denominators are floored at 1e-3. Dropout is disabled.
double grad_check(const MlpModel& model, const RowMatrix<float>& x, std::span<const int> labels,
                  std::uint64_t seed = 0, std::size_t max_coords = 64);

void save_mlp(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_mlp(const std::filesystem::path& path);
std::string history_json(const TrainHistory& history);

}  // namespace eagle
