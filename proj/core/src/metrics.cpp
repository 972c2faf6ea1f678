#include "eagle/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "eagle/error.hpp"

namespace eagle {

std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::vector<int> make_folds(std::span<const int> labels, int n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw Error(ErrorCode::kInvalidArgument, "n_folds must be >= 2");
  if (labels.size() < static_cast<std::size_t>(n_folds)) {
    throw Error(ErrorCode::kTooFewPatients, std::to_string(labels.size()) + " patients for " +
                                                std::to_string(n_folds) + " folds");
  }
  std::set<int> classes(labels.begin(), labels.end());
  std::mt19937_64 rng(seed);
  std::vector<int> fold(labels.size(), -1);
  std::size_t next = 0;
  for (int c : classes) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) members.push_back(i);
    }
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i : members) {
      fold[i] = static_cast<int>(next % static_cast<std::size_t>(n_folds));
      ++next;
    }
  }
  return fold;
}

namespace {

void check_binary(std::span<const double> scores, std::span<const int> labels, std::size_t& n_pos,
                  std::size_t& n_neg) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::kLengthMismatch, "scores and labels differ in length");
  }
  n_pos = n_neg = 0;
  for (int y : labels) {
    if (y == 1) {
      ++n_pos;
    } else if (y == 0) {
      ++n_neg;
    } else {
      throw Error(ErrorCode::kInvalidArgument, "binary labels must be 0 or 1");
    }
  }
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorCode::kSingleClass, "both classes must be present");
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  std::size_t n_pos = 0, n_neg = 0;
  check_binary(scores, labels, n_pos, n_neg);
  const auto ranks = midranks(scores);
  double rank_sum = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) rank_sum += ranks[i];
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1) / 2.0) / (np * nn);
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
  std::size_t n_pos = 0, n_neg = 0;
  check_binary(scores, labels, n_pos, n_neg);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double tp = 0, fp = 0, prev_recall = 0, area = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double thr = scores[order[i]];
    while (i < order.size() && scores[order[i]] == thr) {
      (labels[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    const double recall = tp / static_cast<double>(n_pos);
    const double precision = tp / (tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return area;
}

double balanced_accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw Error(ErrorCode::kLengthMismatch, "length mismatch");
  if (labels.empty()) throw Error(ErrorCode::kEmptyLabels, "no labels");
  std::set<int> classes(labels.begin(), labels.end());
  double sum = 0;
  for (int c : classes) {
    double hit = 0, total = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != c) continue;
      ++total;
      if (predicted[i] == c) ++hit;
    }
    sum += hit / total;
  }
  return sum / static_cast<double>(classes.size());
}

double f1_score(std::span<const int> predicted, std::span<const int> labels, int positive) {
  if (predicted.size() != labels.size()) throw Error(ErrorCode::kLengthMismatch, "length mismatch");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predicted[i] == positive, t = labels[i] == positive;
    if (p && t) ++tp;
    if (p && !t) ++fp;
    if (!p && t) ++fn;
  }
  if (tp + fp + fn == 0) return 0.0;
  return 2 * tp / (2 * tp + fp + fn);
}

std::vector<int> threshold_predictions(std::span<const double> prob, double threshold) {
  std::vector<int> out(prob.size());
  for (std::size_t i = 0; i < prob.size(); ++i) out[i] = prob[i] >= threshold ? 1 : 0;
  return out;
}

std::vector<int> argmax_predictions(const Eigen::MatrixXd& prob) {
  std::vector<int> out(static_cast<std::size_t>(prob.rows()));
  for (Eigen::Index i = 0; i < prob.rows(); ++i) {
    Eigen::Index j = 0;
    prob.row(i).maxCoeff(&j);
    out[static_cast<std::size_t>(i)] = static_cast<int>(j);
  }
  return out;
}

namespace {

template <typename Metric>
double macro_ovr(const Eigen::MatrixXd& prob, std::span<const int> labels, Metric metric) {
  if (static_cast<std::size_t>(prob.rows()) != labels.size()) {
    throw Error(ErrorCode::kLengthMismatch, "probability rows differ from labels");
  }
  std::set<int> classes(labels.begin(), labels.end());
  if (classes.size() < 2) throw Error(ErrorCode::kSingleClass, "need >= 2 classes");
  double sum = 0;
  for (int c : classes) {
    if (c < 0 || c >= prob.cols()) throw Error(ErrorCode::kInvalidArgument, "label outside columns");
    std::vector<double> s(labels.size());
    std::vector<int> y(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      s[i] = prob(static_cast<Eigen::Index>(i), c);
      y[i] = labels[i] == c ? 1 : 0;
    }
    sum += metric(s, y);
  }
  return sum / static_cast<double>(classes.size());
}

}  // namespace

double macro_ovr_auroc(const Eigen::MatrixXd& prob, std::span<const int> labels) {
  return macro_ovr(prob, labels, [](const auto& s, const auto& y) { return auroc(s, y); });
}

double macro_ovr_auprc(const Eigen::MatrixXd& prob, std::span<const int> labels) {
  return macro_ovr(prob, labels, [](const auto& s, const auto& y) { return auprc(s, y); });
}

double macro_f1(std::span<const int> predicted, std::span<const int> labels) {
  std::set<int> classes(labels.begin(), labels.end());
  if (classes.empty()) throw Error(ErrorCode::kEmptyLabels, "no labels");
  double sum = 0;
  for (int c : classes) sum += f1_score(predicted, labels, c);
  return sum / static_cast<double>(classes.size());
}

std::vector<double> ensemble_folds(std::span<const std::vector<double>> folds) {
  if (folds.empty()) throw Error(ErrorCode::kEmptyInput, "no fold predictions");
  std::vector<double> out(folds.front().size(), 0.0);
  for (const auto& f : folds) {
    if (f.size() != out.size()) throw Error(ErrorCode::kLengthMismatch, "fold vectors differ in length");
    for (std::size_t i = 0; i < f.size(); ++i) out[i] += f[i];
  }
  for (double& v : out) v /= static_cast<double>(folds.size());
  return out;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

DeLongResult delong_test(std::span<const double> a, std::span<const double> b,
                         std::span<const int> labels) {
  if (a.size() != b.size()) throw Error(ErrorCode::kLengthMismatch, "paired score vectors differ in length");
  std::size_t m = 0, n = 0;
  check_binary(a, labels, m, n);
  if (m < 2 || n < 2) {
    throw Error(ErrorCode::kSingleClass, "DeLong variance needs >= 2 samples per class");
  }

  struct Components {
    double auc;
    std::vector<double> v10, v01;
  };
  auto placements = [&](std::span<const double> s) {
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(s[i]);
    std::vector<double> all(pos);
    all.insert(all.end(), neg.begin(), neg.end());
    const auto tx = midranks(pos), ty = midranks(neg), tz = midranks(all);
    Components c;
    c.v10.resize(m);
    c.v01.resize(n);
    double rank_sum = 0;
    for (std::size_t i = 0; i < m; ++i) {
      c.v10[i] = (tz[i] - tx[i]) / static_cast<double>(n);
      rank_sum += tz[i];
    }
    for (std::size_t j = 0; j < n; ++j) c.v01[j] = 1.0 - (tz[m + j] - ty[j]) / static_cast<double>(m);
    const double md = static_cast<double>(m), nd = static_cast<double>(n);
    c.auc = (rank_sum - md * (md + 1) / 2.0) / (md * nd);
    return c;
  };
  const Components ca = placements(a), cb = placements(b);

  auto cov = [](const std::vector<double>& x, const std::vector<double>& y) {
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
    return s / static_cast<double>(x.size() - 1);
  };
  const double md = static_cast<double>(m), nd = static_cast<double>(n);
  DeLongResult r;
  r.auroc_a = ca.auc;
  r.auroc_b = cb.auc;
  r.var_a = cov(ca.v10, ca.v10) / md + cov(ca.v01, ca.v01) / nd;
  r.var_b = cov(cb.v10, cb.v10) / md + cov(cb.v01, cb.v01) / nd;
  r.cov_ab = cov(ca.v10, cb.v10) / md + cov(ca.v01, cb.v01) / nd;
  const double var = r.var_a + r.var_b - 2.0 * r.cov_ab;
  const double diff = r.auroc_a - r.auroc_b;
  if (var < 1e-12 && diff == 0.0) {
    r.z = 0.0;
    r.p_value = 1.0;
    return r;
  }
  r.z = diff / std::sqrt(std::max(var, 1e-300));
  r.p_value = std::clamp(std::erfc(std::fabs(r.z) / std::sqrt(2.0)), std::numeric_limits<double>::min(), 1.0);
  return r;
}

std::vector<double> benjamini_hochberg(std::span<const double> p) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> adjusted(m);
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const std::size_t i = order[r];
    if (!(p[i] >= 0.0 && p[i] <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "p-values must lie in [0, 1]");
    running = std::min(running, p[i] * static_cast<double>(m) / static_cast<double>(r + 1));
    adjusted[i] = running;
  }
  return adjusted;
}

}  // namespace eagle
