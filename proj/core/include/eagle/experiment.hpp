#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "eagle/config.hpp"
#include "eagle/embedding.hpp"
#include "eagle/linear_probe.hpp"
#include "eagle/mlp.hpp"

namespace eagle {

struct LabelRecord {
  std::string patient_id;
  std::string label;
  std::string cohort;
};

/// CSV with a header naming at least patient_id and label; an optional
/// cohort column. Throws ParseError or DuplicateId.
std::vector<LabelRecord> parse_labels_csv(const std::string& text);
std::vector<LabelRecord> read_labels_csv(const std::filesystem::path& path);

struct ExperimentTask {
  std::string name = "task";
  std::vector<std::string> train_cohorts;  // empty: every cohort not used for testing
  std::vector<std::string> test_cohorts;   // empty: out-of-fold evaluation only
  std::optional<std::string> positive_label;
  int n_folds = 5;
  std::size_t min_per_label = 10;
  std::optional<std::size_t> subset_size;  // e.g. 300, 150 or 75 patients
  std::uint64_t seed = 0;
  TrainConfig train;

  /// Reads [task] (name, train_cohorts, test_cohorts, positive_label, folds,
  /// min_per_label, subset_size, seed) and [train] (lr, weight_decay, epochs,
  /// batch, patience, dropout).
  static ExperimentTask from_config(const KeyValueConfig& cfg);
};

/// Labeled rows joined from an embedding table. Class ids follow the sorted
/// label names, except that a binary task's positive label becomes class 1.
struct Dataset {
  std::vector<std::string> ids;
  std::vector<std::string> cohorts;
  RowMatrix<float> x;
  std::vector<int> y;
  std::vector<std::string> class_names;

  Dataset subset(std::span<const std::size_t> rows) const;
};

Dataset build_dataset(const EmbeddingTable& table, const std::vector<LabelRecord>& labels,
                      const std::optional<std::string>& positive_label = std::nullopt);

/// Deterministic stratified draw of `size` rows (largest-remainder quota per
/// class), returned in ascending row order.
std::vector<std::size_t> stratified_subset(std::span<const int> labels, std::size_t size, std::uint64_t seed);

struct MetricRow {
  std::string task;
  std::string model;
  std::string cohort;
  std::string fold;  // "0".."4", "ensemble", or "pooled" for out-of-fold
  std::string metric;
  double value = 0;
};

struct CohortPredictions {
  std::string cohort;
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<Eigen::MatrixXd> fold_probs;  // n x C per fold model
  Eigen::MatrixXd ensemble;                 // mean of fold_probs
};

struct EvalReport {
  std::string task;
  std::string model;
  bool skipped = false;
  std::string skip_reason;
  std::vector<std::string> notes;  // e.g. test cohorts excluded by the inclusion rule
  std::size_t n_train = 0;
  std::vector<std::string> class_names;
  std::vector<MetricRow> rows;
  std::vector<CohortPredictions> predictions;
  std::vector<TrainHistory> histories;

  /// Metric value for (cohort, fold, metric); NaN when absent.
  double metric(const std::string& cohort, const std::string& fold, const std::string& metric) const;
};

/// Five-fold training on the training cohort (each fold model early-stops on
/// its held-out fold), then evaluation of every fold model and of the fold
/// ensemble on each test cohort. Without test cohorts the held-out folds are
/// scored instead. A task with fewer than min_per_label cases for some label
/// is skipped with a reason rather than failing.
EvalReport run_experiment(const ExperimentTask& task, const std::string& model, const Dataset& data);

std::string metrics_csv_header();
std::string to_csv(const EvalReport& report, bool header = true);
std::string to_json(const EvalReport& report);

struct Comparison {
  std::string task;
  std::string cohort;
  std::string reference;
  std::string model;
  std::size_t n = 0;
  double auroc_reference = 0;
  double auroc_model = 0;
  double p_value = 1;
  double p_adjusted = 1;
};

/// DeLong tests of the reference model against every other model on the
/// ensembled test predictions (binary tasks, patients common to both), with
/// Benjamini-Hochberg adjustment across all comparisons.
std::vector<Comparison> compare_models(std::span<const EvalReport> reports, const std::string& reference);
std::string significance_json(std::span<const Comparison> comparisons);

/// Few-shot linear probing with the training cohort as sampling pool and the
/// first test cohort as test set. Throws InvalidArgument without a test cohort.
FewShotReport run_fewshot(const ExperimentTask& task, const Dataset& data, const ProbeConfig& cfg);

}  // namespace eagle
