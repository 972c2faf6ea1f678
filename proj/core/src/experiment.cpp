#include "eagle/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "eagle/error.hpp"
#include "eagle/metrics.hpp"

namespace eagle {

using nlohmann::json;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::vector<std::size_t> per_class_counts(std::span<const int> y, std::size_t n_classes) {
  std::vector<std::size_t> counts(n_classes, 0);
  for (int l : y) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

Eigen::MatrixXd probabilities(const MlpModel& model, const RowMatrix<float>& x) {
  return predict_proba(model, x).cast<double>();
}

void add_metrics(EvalReport& r, const std::string& cohort, const std::string& fold, const Eigen::MatrixXd& prob,
                 std::span<const int> y) {
  auto push = [&](const char* name, double v) { r.rows.push_back({r.task, r.model, cohort, fold, name, v}); };
  if (prob.cols() == 2) {
    const Eigen::VectorXd pos = prob.col(1);
    const std::span<const double> s(pos.data(), static_cast<std::size_t>(pos.size()));
    const auto pred = threshold_predictions(s, 0.5);
    push("auroc", auroc(s, y));
    push("auprc", auprc(s, y));
    push("balanced_accuracy", balanced_accuracy(pred, y));
    push("f1", f1_score(pred, y));
  } else {
    const auto pred = argmax_predictions(prob);
    push("auroc", macro_ovr_auroc(prob, y));
    push("auprc", macro_ovr_auprc(prob, y));
    push("balanced_accuracy", balanced_accuracy(pred, y));
    push("f1", macro_f1(pred, y));
  }
}

}  // namespace

std::vector<LabelRecord> parse_labels_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParseError, "labels file is empty");
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  const auto id_col = column("patient_id");
  const auto label_col = column("label");
  const auto cohort_col = column("cohort");
  if (!id_col || !label_col) throw Error(ErrorCode::kParseError, "labels header needs patient_id and label");

  std::vector<LabelRecord> out;
  std::set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv_line(line);
    if (f.size() < header.size()) {
      throw Error(ErrorCode::kParseError, "labels line " + std::to_string(line_no) + " has too few fields");
    }
    LabelRecord r{f[*id_col], f[*label_col], cohort_col ? f[*cohort_col] : ""};
    if (r.label.empty()) continue;  // unlabeled patients are not part of the task
    if (!seen.insert(r.patient_id).second) throw Error(ErrorCode::kDuplicateId, "labels repeat patient " + r.patient_id);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<LabelRecord> read_labels_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_labels_csv(ss.str());
}

ExperimentTask ExperimentTask::from_config(const KeyValueConfig& cfg) {
  ExperimentTask t;
  t.name = cfg.get_string("task.name", t.name);
  t.train_cohorts = cfg.get_list("task.train_cohorts");
  t.test_cohorts = cfg.get_list("task.test_cohorts");
  if (const auto p = cfg.get_string("task.positive_label"); !p.empty()) t.positive_label = p;
  t.n_folds = static_cast<int>(cfg.get_int("task.folds", t.n_folds));
  t.min_per_label = static_cast<std::size_t>(cfg.get_int("task.min_per_label", static_cast<long long>(t.min_per_label)));
  if (cfg.contains("task.subset_size")) t.subset_size = static_cast<std::size_t>(cfg.get_int("task.subset_size", 0));
  t.seed = static_cast<std::uint64_t>(cfg.get_int("task.seed", 0));
  t.train.lr_max = cfg.get_double("train.lr", t.train.lr_max);
  t.train.weight_decay = cfg.get_double("train.weight_decay", t.train.weight_decay);
  t.train.epochs = static_cast<int>(cfg.get_int("train.epochs", t.train.epochs));
  t.train.batch = static_cast<std::size_t>(cfg.get_int("train.batch", static_cast<long long>(t.train.batch)));
  t.train.patience = static_cast<int>(cfg.get_int("train.patience", t.train.patience));
  t.train.dropout_p = cfg.get_double("train.dropout", t.train.dropout_p);
  t.train.class_weighted = cfg.get_bool("train.class_weighted", t.train.class_weighted);
  if (t.n_folds < 2) throw Error(ErrorCode::kInvalidArgument, "folds must be >= 2");
  return t;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset d;
  d.class_names = class_names;
  d.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d.ids.push_back(ids[rows[i]]);
    d.cohorts.push_back(cohorts[rows[i]]);
    d.y.push_back(y[rows[i]]);
    d.x.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  }
  return d;
}

Dataset build_dataset(const EmbeddingTable& table, const std::vector<LabelRecord>& labels,
                      const std::optional<std::string>& positive_label) {
  std::set<std::string> names;
  for (const auto& l : labels) names.insert(l.label);
  Dataset d;
  d.class_names.assign(names.begin(), names.end());
  if (positive_label) {
    if (!names.contains(*positive_label)) {
      throw Error(ErrorCode::kInvalidArgument, "positive label '" + *positive_label + "' does not occur");
    }
    if (d.class_names.size() == 2 && d.class_names[1] != *positive_label) std::swap(d.class_names[0], d.class_names[1]);
  }
  std::map<std::string, int> class_id;
  for (std::size_t i = 0; i < d.class_names.size(); ++i) class_id[d.class_names[i]] = static_cast<int>(i);

  std::vector<std::size_t> rows;
  for (const auto& l : labels) {
    const std::size_t r = table.find(l.patient_id);
    if (r == table.size()) continue;
    rows.push_back(r);
    d.ids.push_back(l.patient_id);
    std::string cohort = l.cohort;
    if (cohort.empty()) {
      const auto& md = table.metadata[r];
      if (const auto it = md.find("cohort"); it != md.end()) cohort = it->second;
    }
    d.cohorts.push_back(cohort);
    d.y.push_back(class_id.at(l.label));
  }
  d.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table.dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = table.row(rows[i]);
    for (std::size_t c = 0; c < table.dim; ++c) d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = src[c];
  }
  return d;
}

std::vector<std::size_t> stratified_subset(std::span<const int> labels, std::size_t size, std::uint64_t seed) {
  if (size > labels.size()) {
    throw Error(ErrorCode::kTooFewPatients,
                "subset of " + std::to_string(size) + " requested from " + std::to_string(labels.size()) + " patients");
  }
  const int n_classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);

  // largest-remainder quotas, ties to the lower class id
  std::vector<std::size_t> quota(members.size());
  std::vector<std::pair<double, std::size_t>> remainder;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < members.size(); ++c) {
    const double exact = static_cast<double>(size) * static_cast<double>(members[c].size()) / static_cast<double>(labels.size());
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    remainder.push_back({exact - std::floor(exact), c});
  }
  std::stable_sort(remainder.begin(), remainder.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < size && i < remainder.size(); ++i, ++assigned) ++quota[remainder[i].second];

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto m = members[c];
    std::shuffle(m.begin(), m.end(), rng);
    out.insert(out.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(quota[c]));
  }
  std::sort(out.begin(), out.end());
  return out;
}

double EvalReport::metric(const std::string& cohort, const std::string& fold, const std::string& name) const {
  for (const auto& r : rows) {
    if (r.cohort == cohort && r.fold == fold && r.metric == name) return r.value;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

EvalReport run_experiment(const ExperimentTask& task, const std::string& model, const Dataset& data) {
  EvalReport report;
  report.task = task.name;
  report.model = model;
  report.class_names = data.class_names;
  const std::size_t n_classes = data.class_names.size();
  if (n_classes < 2) {
    report.skipped = true;
    report.skip_reason = "fewer than two labels";
    return report;
  }

  std::vector<std::size_t> train_rows;
  std::map<std::string, std::vector<std::size_t>> test_rows;
  for (std::size_t i = 0; i < data.ids.size(); ++i) {
    if (contains(task.test_cohorts, data.cohorts[i])) {
      test_rows[data.cohorts[i]].push_back(i);
    } else if (task.train_cohorts.empty() || contains(task.train_cohorts, data.cohorts[i])) {
      train_rows.push_back(i);
    }
  }
  Dataset train_set = data.subset(train_rows);
  if (task.subset_size) {
    try {
      train_set = train_set.subset(stratified_subset(train_set.y, *task.subset_size, task.seed));
    } catch (const Error& e) {
      report.skipped = true;
      report.skip_reason = e.what();
      return report;
    }
  }
  report.n_train = train_set.ids.size();

  const auto counts = per_class_counts(train_set.y, n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (counts[c] < task.min_per_label) {
      report.skipped = true;
      report.skip_reason = "training label '" + data.class_names[c] + "' has " + std::to_string(counts[c]) +
                           " cases, fewer than " + std::to_string(task.min_per_label);
      return report;
    }
  }

  std::vector<std::pair<std::string, Dataset>> tests;
  for (const auto& cohort : task.test_cohorts) {
    const auto it = test_rows.find(cohort);
    if (it == test_rows.end()) {
      report.notes.push_back("test cohort '" + cohort + "' has no labeled patients");
      continue;
    }
    Dataset t = data.subset(it->second);
    const auto tc = per_class_counts(t.y, n_classes);
    const auto low = std::find_if(tc.begin(), tc.end(), [&](std::size_t c) { return c < task.min_per_label; });
    if (low != tc.end()) {
      report.notes.push_back("test cohort '" + cohort + "' skipped: label '" +
                             data.class_names[static_cast<std::size_t>(low - tc.begin())] + "' has " +
                             std::to_string(*low) + " cases");
      continue;
    }
    tests.emplace_back(cohort, std::move(t));
  }
  if (!task.test_cohorts.empty() && tests.empty()) {
    report.skipped = true;
    report.skip_reason = "no test cohort passes the inclusion rule";
    return report;
  }

  const auto folds = make_folds(train_set.y, task.n_folds, task.seed);
  std::vector<MlpModel> models;
  CohortPredictions oof{"internal", train_set.ids, train_set.y, {}, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(train_set.ids.size()), static_cast<Eigen::Index>(n_classes))};
  for (int f = 0; f < task.n_folds; ++f) {
    std::vector<std::size_t> tr, va;
    for (std::size_t i = 0; i < folds.size(); ++i) (folds[i] == f ? va : tr).push_back(i);
    const Dataset a = train_set.subset(tr), b = train_set.subset(va);
    TrainConfig cfg = task.train;
    cfg.seed = task.seed * 1000003ULL + static_cast<std::uint64_t>(f);
    auto init = make_mlp(static_cast<std::size_t>(data.x.cols()), n_classes, cfg.seed, kMlpHidden, cfg.dropout_p);
    auto result = train(std::move(init), LabeledSet{a.x, a.y}, LabeledSet{b.x, b.y}, cfg);
    report.histories.push_back(result.history);
    models.push_back(result.model);
    if (tests.empty()) {
      const Eigen::MatrixXd p = probabilities(result.model, b.x);
      add_metrics(report, "internal", std::to_string(f), p, b.y);
      for (std::size_t i = 0; i < va.size(); ++i) oof.ensemble.row(static_cast<Eigen::Index>(va[i])) = p.row(static_cast<Eigen::Index>(i));
    }
  }

  if (tests.empty()) {
    add_metrics(report, "internal", "pooled", oof.ensemble, oof.labels);
    report.predictions.push_back(std::move(oof));
    return report;
  }
  for (const auto& [cohort, t] : tests) {
    CohortPredictions pred{cohort, t.ids, t.y, {}, Eigen::MatrixXd::Zero(t.x.rows(), static_cast<Eigen::Index>(n_classes))};
    for (std::size_t f = 0; f < models.size(); ++f) {
      Eigen::MatrixXd p = probabilities(models[f], t.x);
      add_metrics(report, cohort, std::to_string(f), p, t.y);
      pred.ensemble += p;
      pred.fold_probs.push_back(std::move(p));
    }
    pred.ensemble /= static_cast<double>(models.size());
    add_metrics(report, cohort, "ensemble", pred.ensemble, t.y);
    report.predictions.push_back(std::move(pred));
  }
  return report;
}

std::string metrics_csv_header() { return "task,model,cohort,fold,metric,value\n"; }

std::string to_csv(const EvalReport& report, bool header) {
  std::string out = header ? metrics_csv_header() : "";
  for (const auto& r : report.rows) {
    out += r.task + "," + r.model + "," + r.cohort + "," + r.fold + "," + r.metric + "," + fmt(r.value) + "\n";
  }
  return out;
}

std::string to_json(const EvalReport& report) {
  json j = {{"task", report.task}, {"model", report.model}, {"skipped", report.skipped}, {"n_train", report.n_train},
            {"classes", report.class_names}, {"notes", report.notes}};
  if (report.skipped) j["skip_reason"] = report.skip_reason;
  json hist = json::array();
  for (const auto& h : report.histories) hist.push_back(json::parse(history_json(h)));
  j["histories"] = hist;
  json preds = json::array();
  for (const auto& p : report.predictions) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < p.ensemble.rows(); ++i) {
      std::vector<double> prob(static_cast<std::size_t>(p.ensemble.cols()));
      for (Eigen::Index c = 0; c < p.ensemble.cols(); ++c) prob[static_cast<std::size_t>(c)] = p.ensemble(i, c);
      rows.push_back({{"id", p.ids[static_cast<std::size_t>(i)]}, {"label", p.labels[static_cast<std::size_t>(i)]}, {"prob", prob}});
    }
    preds.push_back({{"cohort", p.cohort}, {"rows", rows}});
  }
  j["predictions"] = preds;
  return j.dump(1);
}

std::vector<Comparison> compare_models(std::span<const EvalReport> reports, const std::string& reference) {
  std::vector<Comparison> out;
  for (const auto& ref : reports) {
    if (ref.model != reference || ref.skipped || ref.class_names.size() != 2) continue;
    for (const auto& other : reports) {
      if (other.model == reference || other.task != ref.task || other.skipped) continue;
      for (const auto& pa : ref.predictions) {
        for (const auto& pb : other.predictions) {
          if (pa.cohort != pb.cohort) continue;
          std::map<std::string, std::size_t> index_b;
          for (std::size_t i = 0; i < pb.ids.size(); ++i) index_b[pb.ids[i]] = i;
          std::vector<double> sa, sb;
          std::vector<int> y;
          for (std::size_t i = 0; i < pa.ids.size(); ++i) {
            const auto it = index_b.find(pa.ids[i]);
            if (it == index_b.end()) continue;
            sa.push_back(pa.ensemble(static_cast<Eigen::Index>(i), 1));
            sb.push_back(pb.ensemble(static_cast<Eigen::Index>(it->second), 1));
            y.push_back(pa.labels[i]);
          }
          const auto d = delong_test(sa, sb, y);
          out.push_back({ref.task, pa.cohort, reference, other.model, y.size(), d.auroc_a, d.auroc_b, d.p_value, d.p_value});
        }
      }
    }
  }
  std::vector<double> p;
  for (const auto& c : out) p.push_back(c.p_value);
  const auto adj = benjamini_hochberg(p);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].p_adjusted = adj[i];
  return out;
}

std::string significance_json(std::span<const Comparison> comparisons) {
  json arr = json::array();
  for (const auto& c : comparisons) {
    arr.push_back({{"task", c.task},
                   {"cohort", c.cohort},
                   {"reference", c.reference},
                   {"model", c.model},
                   {"n", c.n},
                   {"auroc_reference", c.auroc_reference},
                   {"auroc_model", c.auroc_model},
                   {"p_value", c.p_value},
                   {"p_adjusted", c.p_adjusted},
                   {"significant", c.p_adjusted < 0.05}});
  }
  return json{{"comparisons", arr}}.dump(1);
}

FewShotReport run_fewshot(const ExperimentTask& task, const Dataset& data, const ProbeConfig& cfg) {
  if (task.test_cohorts.empty()) throw Error(ErrorCode::kInvalidArgument, "few-shot evaluation needs a test cohort");
  std::vector<std::size_t> pool, test;
  for (std::size_t i = 0; i < data.ids.size(); ++i) {
    if (data.cohorts[i] == task.test_cohorts.front()) {
      test.push_back(i);
    } else if (!contains(task.test_cohorts, data.cohorts[i]) &&
               (task.train_cohorts.empty() || contains(task.train_cohorts, data.cohorts[i]))) {
      pool.push_back(i);
    }
  }
  const Dataset a = data.subset(pool), b = data.subset(test);
  if (b.ids.empty()) throw Error(ErrorCode::kEmptyInput, "test cohort '" + task.test_cohorts.front() + "' is empty");
  const Eigen::MatrixXd xa = a.x.cast<double>(), xb = b.x.cast<double>();
  return few_shot_eval(task.name, xa, a.y, xb, b.y, cfg);
}

}  // namespace eagle
