#include "eagle/linear_probe.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "eagle/error.hpp"
#include "eagle/metrics.hpp"
#include "eagle/mlp.hpp"

namespace eagle {

LbfgsResult lbfgs_minimize(const Objective& f, Eigen::VectorXd x, int max_iters, double tol,
                           std::size_t memory) {
  LbfgsResult r;
  Eigen::VectorXd g(x.size());
  double fx = f(x, g);
  r.trace.push_back(fx);
  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;

  for (r.iterations = 0; r.iterations < max_iters; ++r.iterations) {
    r.grad_inf_norm = g.lpNorm<Eigen::Infinity>();
    if (r.grad_inf_norm < tol) {
      r.converged = true;
      break;
    }
    // two-loop recursion
    Eigen::VectorXd q = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    double gamma = 1.0;
    if (!s_hist.empty()) gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    Eigen::VectorXd d = gamma * q;
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(d);
      d += s_hist[i] * (alpha[i] - beta);
    }
    d = -d;
    double slope = g.dot(d);
    if (!(slope < 0)) {
      // not a descent direction; restart from steepest descent
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      d = -g;
      slope = -g.squaredNorm();
    }
    double step = s_hist.empty() ? std::min(1.0, 1.0 / std::max(g.lpNorm<Eigen::Infinity>(), 1e-12)) : 1.0;
    Eigen::VectorXd x_new, g_new(x.size());
    double f_new = fx;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + step * d;
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no progress possible at machine precision
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * yv.squaredNorm()) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x = std::move(x_new);
    g = g_new;
    fx = f_new;
    r.trace.push_back(fx);
  }
  r.grad_inf_norm = g.lpNorm<Eigen::Infinity>();
  if (r.grad_inf_norm < tol) r.converged = true;
  r.x = std::move(x);
  r.f = fx;
  return r;
}

namespace {

double log1pexp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double logreg_objective(const Eigen::MatrixXd& x, std::span<const int> y, int n_classes,
                        std::span<const double> sw, double inverse_reg_c, const Eigen::VectorXd& params,
                        Eigen::VectorXd* grad) {
  const Eigen::Index n = x.rows(), d = x.cols();
  const Eigen::Index cols = n_classes == 2 ? 1 : n_classes;
  const Eigen::Map<const Eigen::MatrixXd> W(params.data(), d, cols);
  const Eigen::Map<const Eigen::VectorXd> b(params.data() + d * cols, cols);
  const Eigen::MatrixXd z = (x * W).rowwise() + b.transpose();
  double f = 0.5 / inverse_reg_c * W.squaredNorm();
  Eigen::MatrixXd dz(n, cols);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = sw[static_cast<std::size_t>(i)];
    const int yi = y[static_cast<std::size_t>(i)];
    if (cols == 1) {
      const double zi = z(i, 0);
      f += w * (yi == 1 ? log1pexp(-zi) : log1pexp(zi));
      dz(i, 0) = w * (sigmoid(zi) - (yi == 1 ? 1.0 : 0.0));
    } else {
      const double mx = z.row(i).maxCoeff();
      const Eigen::RowVectorXd e = (z.row(i).array() - mx).exp();
      const double se = e.sum();
      f += w * (mx + std::log(se) - z(i, yi));
      dz.row(i) = w * e / se;
      dz(i, yi) -= w;
    }
  }
  if (grad) {
    grad->resize(params.size());
    Eigen::Map<Eigen::MatrixXd> gW(grad->data(), d, cols);
    Eigen::Map<Eigen::VectorXd> gb(grad->data() + d * cols, cols);
    gW = x.transpose() * dz + W / inverse_reg_c;
    gb = dz.colwise().sum().transpose();
  }
  return f;
}

LogRegModel fit_logreg(const Eigen::MatrixXd& x, std::span<const int> y, const ProbeConfig& cfg,
                       const std::optional<Eigen::VectorXd>& init) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw Error(ErrorCode::kLengthMismatch, "rows and labels differ");
  }
  const std::set<int> classes(y.begin(), y.end());
  if (y.size() < 2 || classes.size() < 2) {
    throw Error(ErrorCode::kDegenerateLabels, "logistic regression needs >= 2 samples and >= 2 classes");
  }
  if (!(cfg.inverse_reg_c > 0)) throw Error(ErrorCode::kInvalidArgument, "C must be positive");
  const int n_classes = *classes.rbegin() + 1;
  std::vector<double> sw(y.size(), 1.0);
  if (cfg.balanced) {
    const auto cw = class_weights(y, n_classes);
    for (std::size_t i = 0; i < y.size(); ++i) sw[i] = cw[static_cast<std::size_t>(y[i])];
  }
  const Eigen::Index cols = n_classes == 2 ? 1 : n_classes;
  const Eigen::Index n_params = x.cols() * cols + cols;
  Eigen::VectorXd x0 = init.value_or(Eigen::VectorXd::Zero(n_params));
  if (x0.size() != n_params) throw Error(ErrorCode::kShapeMismatch, "initial point has wrong size");

  auto obj = [&](const Eigen::VectorXd& p, Eigen::VectorXd& g) {
    return logreg_objective(x, y, n_classes, sw, cfg.inverse_reg_c, p, &g);
  };
  const auto r = lbfgs_minimize(obj, std::move(x0), cfg.max_iters, cfg.tol, cfg.memory);
  LogRegModel m;
  m.n_classes = n_classes;
  m.W = Eigen::Map<const Eigen::MatrixXd>(r.x.data(), x.cols(), cols);
  m.b = Eigen::Map<const Eigen::VectorXd>(r.x.data() + x.cols() * cols, cols);
  m.converged = r.converged;
  m.iterations = r.iterations;
  m.grad_inf_norm = r.grad_inf_norm;
  m.objective_trace = r.trace;
  return m;
}

Eigen::MatrixXd LogRegModel::decision_function(const Eigen::MatrixXd& x) const {
  if (x.cols() != W.rows()) throw Error(ErrorCode::kDimMismatch, "feature width differs from model");
  return (x * W).rowwise() + b.transpose();
}

Eigen::MatrixXd LogRegModel::predict_proba(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd z = decision_function(x);
  Eigen::MatrixXd p(x.rows(), n_classes);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    if (z.cols() == 1) {
      p(i, 1) = sigmoid(z(i, 0));
      p(i, 0) = 1.0 - p(i, 1);
    } else {
      const Eigen::RowVectorXd e = (z.row(i).array() - z.row(i).maxCoeff()).exp();
      p.row(i) = e / e.sum();
    }
  }
  return p;
}

std::vector<std::size_t> few_shot_sample(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  for (auto& [label, members] : by_class) {
    if (members.size() < static_cast<std::size_t>(k)) {
      throw Error(ErrorCode::kInsufficientClassSize, "class " + std::to_string(label) + " has " +
                                                         std::to_string(members.size()) + " < k=" +
                                                         std::to_string(k) + " members");
    }
    std::shuffle(members.begin(), members.end(), rng);
    std::vector<std::size_t> pick(members.begin(), members.begin() + k);
    std::sort(pick.begin(), pick.end());
    out.insert(out.end(), pick.begin(), pick.end());
  }
  return out;
}

FewShotReport few_shot_eval(const std::string& task, const Eigen::MatrixXd& train_x,
                            std::span<const int> train_y, const Eigen::MatrixXd& test_x,
                            std::span<const int> test_y, const ProbeConfig& cfg) {
  if (cfg.repeats < 1) throw Error(ErrorCode::kInvalidArgument, "repeats must be >= 1");
  FewShotReport report;
  report.task = task;
  const bool binary = std::set<int>(test_y.begin(), test_y.end()).size() == 2 &&
                      *std::max_element(test_y.begin(), test_y.end()) == 1;
  for (int k : cfg.ks) {
    FewShotRow row;
    row.k = k;
    row.repeats = cfg.repeats;
    for (int r = 0; r < cfg.repeats; ++r) {
      const std::uint64_t seed = cfg.seed * 1000003ULL + static_cast<std::uint64_t>(k) * 1009ULL +
                                 static_cast<std::uint64_t>(r);
      const auto idx = few_shot_sample(train_y, k, seed);
      Eigen::MatrixXd xs(static_cast<Eigen::Index>(idx.size()), train_x.cols());
      std::vector<int> ys(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        xs.row(static_cast<Eigen::Index>(i)) = train_x.row(static_cast<Eigen::Index>(idx[i]));
        ys[i] = train_y[idx[i]];
      }
      const auto model = fit_logreg(xs, ys, cfg);
      const Eigen::MatrixXd prob = model.predict_proba(test_x);
      double a;
      if (binary) {
        std::vector<double> s(static_cast<std::size_t>(prob.rows()));
        for (Eigen::Index i = 0; i < prob.rows(); ++i) s[static_cast<std::size_t>(i)] = prob(i, 1);
        a = auroc(s, test_y);
      } else {
        a = macro_ovr_auroc(prob, test_y);
      }
      report.fits.push_back({k, r, seed, a, model.converged});
      row.seeds.push_back(seed);
      row.aurocs.push_back(a);
    }
    const double n = static_cast<double>(row.aurocs.size());
    row.mean_auroc = std::accumulate(row.aurocs.begin(), row.aurocs.end(), 0.0) / n;
    double ss = 0;
    for (double a : row.aurocs) ss += (a - row.mean_auroc) * (a - row.mean_auroc);
    row.sd_auroc = row.aurocs.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string FewShotReport::to_json() const {
  nlohmann::json out = {{"task", task}, {"rows", nlohmann::json::array()}, {"fits", nlohmann::json::array()}};
  for (const auto& r : rows) {
    out["rows"].push_back({{"k", r.k},
                           {"mean_auroc", r.mean_auroc},
                           {"sd_auroc", r.sd_auroc},
                           {"repeats", r.repeats},
                           {"seeds", r.seeds},
                           {"aurocs", r.aurocs}});
  }
  for (const auto& f : fits) {
    out["fits"].push_back({{"k", f.k}, {"repeat", f.repeat}, {"seed", f.seed}, {"auroc", f.auroc}, {"converged", f.converged}});
  }
  return out.dump(2);
}

}  // namespace eagle
