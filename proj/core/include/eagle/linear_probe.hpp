#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace eagle {

struct ProbeConfig {
  double inverse_reg_c = 1.0;
  bool balanced = true;
  int max_iters = 10000;
  double tol = 1e-6;
  std::size_t memory = 10;
  std::vector<int> ks = {1, 2, 4, 8, 16, 32};
  int repeats = 10;
  std::uint64_t seed = 0;
};

/// L2-regularized logistic regression in float64. Binary problems use one
/// weight column with a sigmoid; more classes use a multinomial softmax.
struct LogRegModel {
  Eigen::MatrixXd W;  // d x C' (C' = 1 for binary)
  Eigen::VectorXd b;  // C'
  int n_classes = 2;
  bool converged = false;
  int iterations = 0;
  double grad_inf_norm = 0;
  std::vector<double> objective_trace;

  /// n x C decision logits (binary: one column).
  Eigen::MatrixXd decision_function(const Eigen::MatrixXd& x) const;
  /// n x n_classes probabilities.
  Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& x) const;
};

/// Generic limited-memory quasi-Newton minimizer with Armijo backtracking.
struct LbfgsResult {
  Eigen::VectorXd x;
  double f = 0;
  double grad_inf_norm = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;
LbfgsResult lbfgs_minimize(const Objective& f, Eigen::VectorXd x0, int max_iters, double tol,
                           std::size_t memory = 10);

/// Minimizes sum_i s_{y_i} NLL_i + ||W||^2 / (2C); the intercept is not
/// penalized. s is the balanced class weight or 1. Throws DegenerateLabels.
LogRegModel fit_logreg(const Eigen::MatrixXd& x, std::span<const int> y, const ProbeConfig& cfg,
                       const std::optional<Eigen::VectorXd>& init = std::nullopt);

/// Value and gradient of the objective above at packed parameters
/// [W column-major, b]; exposed for verification.
double logreg_objective(const Eigen::MatrixXd& x, std::span<const int> y, int n_classes,
                        std::span<const double> sample_weight, double inverse_reg_c,
                        const Eigen::VectorXd& params, Eigen::VectorXd* grad);

/// k indices per class drawn without replacement, grouped by class in
/// ascending label order, sorted within class. Throws InsufficientClassSize.
std::vector<std::size_t> few_shot_sample(std::span<const int> labels, int k, std::uint64_t seed);

struct FewShotFit {
  int k = 0;
  int repeat = 0;
  std::uint64_t seed = 0;
  double auroc = 0;
  bool converged = false;
};

struct FewShotRow {
  int k = 0;
  double mean_auroc = 0;
  double sd_auroc = 0;
  int repeats = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> aurocs;
};

struct FewShotReport {
  std::string task;
  std::vector<FewShotRow> rows;
  std::vector<FewShotFit> fits;

  std::string to_json() const;
};

/// For each k and repeat: sample k per class from the training pool, fit,
/// and score AUROC on the fixed test set (macro one-vs-rest for >2 classes).
/// The standard deviation uses n-1 in the denominator.
FewShotReport few_shot_eval(const std::string& task, const Eigen::MatrixXd& train_x,
                            std::span<const int> train_y, const Eigen::MatrixXd& test_x,
                            std::span<const int> test_y, const ProbeConfig& cfg);

}  // namespace eagle
