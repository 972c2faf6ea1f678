#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "eagle/error.hpp"
#include "eagle/experiment.hpp"
#include "eagle/metrics.hpp"

using namespace eagle;

namespace {

// Separable two-class table; patients "<cohort>_<i>".
void add_cohort(EmbeddingTable& t, std::vector<LabelRecord>& labels, const std::string& cohort, int n, double shift,
                unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> nd;
  std::vector<float> v(t.dim);
  for (int i = 0; i < n; ++i) {
    const bool pos = i % 2 == 1;
    for (std::size_t j = 0; j < t.dim; ++j) v[j] = nd(rng) + (j == 0 && pos ? static_cast<float>(shift) : 0.0f);
    const std::string id = cohort + "_" + std::to_string(i);
    t.append(id, v, {{"cohort", cohort}});
    labels.push_back({id, pos ? "tumor" : "normal", cohort});
  }
}

ExperimentTask quick_task() {
  ExperimentTask task;
  task.name = "demo";
  task.train.epochs = 6;
  task.train.lr_max = 1e-3;
  return task;
}

}  // namespace

TEST(Labels, ParseCsv) {
  const auto r = parse_labels_csv("label,patient_id,cohort\nA,p1,x\n,p2,x\n\"B\",p3,y\n");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].patient_id, "p1");
  EXPECT_EQ(r[1].label, "B");
  EXPECT_EQ(r[1].cohort, "y");
  EXPECT_THROW((void)parse_labels_csv("id,label\np,A\n"), Error);
  EXPECT_THROW((void)parse_labels_csv("patient_id,label\np,A\np,B\n"), Error);
}

TEST(DatasetTest, PositiveLabelIsClassOne) {
  EmbeddingTable t{"patients", "e", 2, {}, {}, {}};
  std::vector<LabelRecord> labels;
  add_cohort(t, labels, "a", 6, 1.0, 1);
  const auto d = build_dataset(t, labels, std::string("normal"));
  EXPECT_EQ(d.class_names, (std::vector<std::string>{"tumor", "normal"}));
  EXPECT_EQ(d.y[0], 1);
  const auto sorted = build_dataset(t, labels);
  EXPECT_EQ(sorted.class_names, (std::vector<std::string>{"normal", "tumor"}));
  EXPECT_EQ(sorted.cohorts[0], "a");
  labels.pop_back();
  EXPECT_EQ(build_dataset(t, labels).ids.size(), 5u);
}

TEST(Subset, StratifiedAndDeterministic) {
  std::vector<int> y;
  for (int i = 0; i < 90; ++i) y.push_back(i < 30 ? 1 : 0);
  const auto a = stratified_subset(y, 30, 5);
  EXPECT_EQ(a, stratified_subset(y, 30, 5));
  EXPECT_NE(a, stratified_subset(y, 30, 6));
  ASSERT_EQ(a.size(), 30u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  int pos = 0;
  for (auto i : a) pos += y[i];
  EXPECT_EQ(pos, 10);
  EXPECT_THROW((void)stratified_subset(y, 91, 0), Error);
}

TEST(Experiment, FoldRowsPlusEnsemblePerTestCohort) {
  EmbeddingTable t{"patients", "e", 8, {}, {}, {}};
  std::vector<LabelRecord> labels;
  add_cohort(t, labels, "train", 100, 2.5, 1);
  add_cohort(t, labels, "ext", 60, 2.5, 2);
  auto task = quick_task();
  task.test_cohorts = {"ext"};
  task.positive_label = "tumor";
  const auto d = build_dataset(t, labels, task.positive_label);
  const auto r = run_experiment(task, "eagle", d);
  ASSERT_FALSE(r.skipped) << r.skip_reason;
  EXPECT_EQ(r.n_train, 100u);
  EXPECT_EQ(r.histories.size(), 5u);
  std::set<std::string> folds;
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.cohort, "ext");
    if (row.metric == "auroc") folds.insert(row.fold);
  }
  EXPECT_EQ(folds, (std::set<std::string>{"0", "1", "2", "3", "4", "ensemble"}));
  for (const auto& m : {"auroc", "auprc", "balanced_accuracy", "f1"}) EXPECT_FALSE(std::isnan(r.metric("ext", "ensemble", m))) << m;

  // ensemble is the mean of the fold probabilities and its AUROC is recomputable
  const auto& p = r.predictions.at(0);
  ASSERT_EQ(p.fold_probs.size(), 5u);
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(p.ensemble.rows(), p.ensemble.cols());
  for (const auto& fp : p.fold_probs) mean += fp / 5.0;
  EXPECT_LT((mean - p.ensemble).cwiseAbs().maxCoeff(), 1e-12);
  std::vector<double> s(static_cast<std::size_t>(p.ensemble.rows()));
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = p.ensemble(static_cast<Eigen::Index>(i), 1);
  EXPECT_NEAR(r.metric("ext", "ensemble", "auroc"), auroc(s, p.labels), 1e-12);
  EXPECT_GT(r.metric("ext", "ensemble", "auroc"), 0.9);

  const auto csv = to_csv(r);
  EXPECT_EQ(csv.rfind("task,model,cohort,fold,metric,value\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 6 * 4);
}

TEST(Experiment, OutOfFoldWithoutTestCohort) {
  EmbeddingTable t{"patients", "e", 4, {}, {}, {}};
  std::vector<LabelRecord> labels;
  add_cohort(t, labels, "only", 60, 2.0, 3);
  const auto r = run_experiment(quick_task(), "m", build_dataset(t, labels));
  ASSERT_FALSE(r.skipped);
  EXPECT_FALSE(std::isnan(r.metric("internal", "pooled", "auroc")));
  EXPECT_FALSE(std::isnan(r.metric("internal", "4", "auroc")));
}

TEST(Experiment, InclusionRuleSkipsTask) {
  EmbeddingTable t{"patients", "e", 4, {}, {}, {}};
  std::vector<LabelRecord> labels;
  add_cohort(t, labels, "tiny", 18, 2.0, 4);
  const auto r = run_experiment(quick_task(), "m", build_dataset(t, labels));
  EXPECT_TRUE(r.skipped);
  EXPECT_NE(r.skip_reason.find("fewer than 10"), std::string::npos);
  EXPECT_TRUE(r.rows.empty());

  add_cohort(t, labels, "big", 40, 2.0, 5);
  auto task = quick_task();
  task.train_cohorts = {"big"};
  task.test_cohorts = {"tiny"};
  const auto r2 = run_experiment(task, "m", build_dataset(t, labels));
  EXPECT_TRUE(r2.skipped);
  ASSERT_EQ(r2.notes.size(), 1u);
}

TEST(Experiment, SubsetSizeIsApplied) {
  EmbeddingTable t{"patients", "e", 4, {}, {}, {}};
  std::vector<LabelRecord> labels;
  add_cohort(t, labels, "c", 120, 2.0, 6);
  auto task = quick_task();
  task.subset_size = 75;
  const auto r = run_experiment(task, "m", build_dataset(t, labels));
  EXPECT_EQ(r.n_train, 75u);
}

TEST(Experiment, CompareModelsAdjustsAcrossComparisons) {
  EmbeddingTable good{"patients", "e", 6, {}, {}, {}}, weak{"patients", "e", 6, {}, {}, {}}, weak2{"patients", "e", 6, {}, {}, {}};
  std::vector<LabelRecord> labels, l2, l3;
  add_cohort(good, labels, "tr", 80, 3.0, 7);
  add_cohort(good, labels, "te", 60, 3.0, 8);
  add_cohort(weak, l2, "tr", 80, 0.5, 7);
  add_cohort(weak, l2, "te", 60, 0.5, 8);
  add_cohort(weak2, l3, "tr", 80, 0.8, 9);
  add_cohort(weak2, l3, "te", 60, 0.8, 10);
  auto task = quick_task();
  task.test_cohorts = {"te"};
  std::vector<EvalReport> reps = {run_experiment(task, "eagle", build_dataset(good, labels)),
                                  run_experiment(task, "meanpool", build_dataset(weak, l2)),
                                  run_experiment(task, "other", build_dataset(weak2, l3))};
  const auto cmp = compare_models(reps, "eagle");
  ASSERT_EQ(cmp.size(), 2u);
  std::vector<double> p = {cmp[0].p_value, cmp[1].p_value};
  const auto adj = benjamini_hochberg(p);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(cmp[i].n, 60u);
    EXPECT_DOUBLE_EQ(cmp[i].p_adjusted, adj[i]);
    EXPECT_GT(cmp[i].auroc_reference, cmp[i].auroc_model);
  }
  EXPECT_NE(significance_json(cmp).find("p_adjusted"), std::string::npos);
}

TEST(Experiment, FewShotNeedsTestCohort) {
  EmbeddingTable t{"patients", "e", 4, {}, {}, {}};
  std::vector<LabelRecord> labels;
  add_cohort(t, labels, "pool", 80, 2.0, 11);
  add_cohort(t, labels, "test", 40, 2.0, 12);
  auto task = quick_task();
  ProbeConfig pc;
  pc.ks = {1, 8};
  pc.repeats = 3;
  EXPECT_THROW((void)run_fewshot(task, build_dataset(t, labels), pc), Error);
  task.test_cohorts = {"test"};
  const auto rep = run_fewshot(task, build_dataset(t, labels), pc);
  EXPECT_EQ(rep.fits.size(), 6u);
  EXPECT_GT(rep.rows[1].mean_auroc, 0.8);
}

TEST(Experiment, TaskFromConfig) {
  const auto cfg = KeyValueConfig::parse(
      "[task]\nname = \"msi\"\ntest_cohorts = [\"ext\", \"ext2\"]\npositive_label = \"MSI\"\nsubset_size = 150\n"
      "[train]\nlr = 5e-4\nepochs = 10\n");
  const auto t = ExperimentTask::from_config(cfg);
  EXPECT_EQ(t.name, "msi");
  EXPECT_EQ(t.test_cohorts, (std::vector<std::string>{"ext", "ext2"}));
  EXPECT_EQ(*t.positive_label, "MSI");
  EXPECT_EQ(*t.subset_size, 150u);
  EXPECT_DOUBLE_EQ(t.train.lr_max, 5e-4);
  EXPECT_EQ(t.train.epochs, 10);
}
