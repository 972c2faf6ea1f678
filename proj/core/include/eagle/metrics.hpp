#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace eagle {

/// Midranks (1-based, ties share the average rank).
std::vector<double> midranks(std::span<const double> values);

/// Stratified fold assignment: members of each class are shuffled and dealt
/// round-robin, continuing across classes, so per-class and total fold
/// counts differ by at most one. Throws TooFewPatients when n < n_folds.
std::vector<int> make_folds(std::span<const int> labels, int n_folds = 5, std::uint64_t seed = 0);

/// Mann-Whitney AUROC with midranks; label 1 is the positive class.
double auroc(std::span<const double> scores, std::span<const int> labels);

/// Step-wise area under the precision-recall curve (average precision),
/// evaluated at every distinct score threshold.
double auprc(std::span<const double> scores, std::span<const int> labels);

double balanced_accuracy(std::span<const int> predicted, std::span<const int> labels);
double f1_score(std::span<const int> predicted, std::span<const int> labels, int positive = 1);

/// Hard predictions from positive-class probabilities at `threshold`.
std::vector<int> threshold_predictions(std::span<const double> prob, double threshold = 0.5);
/// Row-wise argmax of a probability matrix.
std::vector<int> argmax_predictions(const Eigen::MatrixXd& prob);

/// One-vs-rest metrics averaged over the classes present in `labels`.
double macro_ovr_auroc(const Eigen::MatrixXd& prob, std::span<const int> labels);
double macro_ovr_auprc(const Eigen::MatrixXd& prob, std::span<const int> labels);
double macro_f1(std::span<const int> predicted, std::span<const int> labels);

/// Arithmetic mean of per-model probability vectors.
std::vector<double> ensemble_folds(std::span<const std::vector<double>> fold_probabilities);

struct DeLongResult {
  double auroc_a = 0;
  double auroc_b = 0;
  double var_a = 0;
  double var_b = 0;
  double cov_ab = 0;
  double z = 0;
  double p_value = 1.0;
};

/// Two-sided DeLong test for paired AUROCs (fast midrank placement values).
DeLongResult delong_test(std::span<const double> scores_a, std::span<const double> scores_b,
                         std::span<const int> labels);

/// Benjamini-Hochberg step-up adjusted p-values, in input order.
std::vector<double> benjamini_hochberg(std::span<const double> pvalues);

/// Standard normal CDF.
double normal_cdf(double x);

}  // namespace eagle
