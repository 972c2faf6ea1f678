#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "eagle/error.hpp"
#include "eagle/linear_probe.hpp"
#include "oracles.hpp"

using namespace eagle;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST(LinearProbe, OneDimensionalOptimumMatchesRootFinding) {
  // two points at -1 (class 0) and +1 (class 1): b = 0 and w solves w = 2C(1 - sigmoid(w))
  for (double C : {0.1, 1.0, 10.0}) {
    Eigen::MatrixXd x(2, 1);
    x << -1, 1;
    const std::vector<int> y = {0, 1};
    ProbeConfig cfg;
    cfg.inverse_reg_c = C;
    cfg.tol = 1e-10;
    const auto model = fit_logreg(x, y, cfg);
    const double w = oracle::bisect([&](double v) { return v - 2 * C * (1 - sigmoid(v)); }, 0.0, 50.0);
    EXPECT_NEAR(model.W(0, 0), w, 1e-6) << "C=" << C;
    EXPECT_NEAR(model.b(0), 0.0, 1e-6);
    EXPECT_TRUE(model.converged);
  }
}

TEST(LinearProbe, InterceptIsNotPenalized) {
  // constant feature, imbalanced labels without reweighting: b = logit(3/4)
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(4, 1);
  const std::vector<int> y = {1, 1, 1, 0};
  ProbeConfig cfg;
  cfg.balanced = false;
  cfg.tol = 1e-10;
  const auto model = fit_logreg(x, y, cfg);
  EXPECT_NEAR(model.b(0), std::log(3.0), 1e-6);
}

TEST(LinearProbe, ObjectiveGradientMatchesFiniteDifferences) {
  std::mt19937 rng(1);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd x(12, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = nd(rng);
  const std::vector<int> y = {0, 1, 2, 0, 1, 2, 0, 0, 1, 2, 2, 2};
  std::vector<double> sw(12);
  for (auto& v : sw) v = 0.5 + std::abs(nd(rng));
  Eigen::VectorXd params(3 * 3 + 3);
  for (Eigen::Index i = 0; i < params.size(); ++i) params(i) = nd(rng) * 0.3;
  Eigen::VectorXd grad;
  (void)logreg_objective(x, y, 3, sw, 0.7, params, &grad);
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    auto p = params, m = params;
    p(i) += 1e-6;
    m(i) -= 1e-6;
    const double fd = (logreg_objective(x, y, 3, sw, 0.7, p, nullptr) - logreg_objective(x, y, 3, sw, 0.7, m, nullptr)) / 2e-6;
    EXPECT_NEAR(grad(i), fd, 1e-6);
  }
}

TEST(LinearProbe, LbfgsMinimizesRosenbrock) {
  const auto f = [](const Eigen::VectorXd& v, Eigen::VectorXd& g) {
    const double a = v(0), b = v(1);
    g.resize(2);
    g(0) = -2 * (1 - a) - 400 * a * (b - a * a);
    g(1) = 200 * (b - a * a);
    return (1 - a) * (1 - a) + 100 * (b - a * a) * (b - a * a);
  };
  const auto r = lbfgs_minimize(f, Eigen::Vector2d(-1.2, 1.0), 500, 1e-10);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.x(0), 1.0, 1e-5);
  EXPECT_NEAR(r.x(1), 1.0, 1e-5);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i], r.trace[i - 1] + 1e-12);
}

TEST(LinearProbe, MulticlassProbabilities) {
  std::mt19937 rng(2);
  std::normal_distribution<double> nd(0, 0.3);
  Eigen::MatrixXd x(30, 2);
  std::vector<int> y;
  for (int i = 0; i < 30; ++i) {
    const int c = i % 3;
    x(i, 0) = (c == 1 ? 2.0 : 0.0) + nd(rng);
    x(i, 1) = (c == 2 ? 2.0 : 0.0) + nd(rng);
    y.push_back(c);
  }
  const auto model = fit_logreg(x, y, ProbeConfig{});
  EXPECT_EQ(model.n_classes, 3);
  const auto p = model.predict_proba(x);
  int correct = 0;
  for (int i = 0; i < 30; ++i) {
    EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
    Eigen::Index arg;
    p.row(i).maxCoeff(&arg);
    correct += arg == y[i];
  }
  EXPECT_GE(correct, 28);
}

TEST(LinearProbe, SingleClassIsDegenerate) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 2);
  const std::vector<int> y = {1, 1, 1};
  try {
    (void)fit_logreg(x, y, ProbeConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateLabels);
  }
}

TEST(LinearProbe, FewShotSampleShape) {
  std::vector<int> y;
  for (int i = 0; i < 40; ++i) y.push_back(i % 3 == 0 ? 1 : 0);
  const auto idx = few_shot_sample(y, 4, 9);
  ASSERT_EQ(idx.size(), 8u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(y[idx[i]], 0);
  for (int i = 4; i < 8; ++i) EXPECT_EQ(y[idx[i]], 1);
  EXPECT_TRUE(std::is_sorted(idx.begin(), idx.begin() + 4));
  EXPECT_TRUE(std::is_sorted(idx.begin() + 4, idx.end()));
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 8u);
  EXPECT_EQ(few_shot_sample(y, 4, 9), idx);
  EXPECT_NE(few_shot_sample(y, 4, 10), idx);
  try {
    (void)few_shot_sample(y, 15, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientClassSize);
  }
}

TEST(LinearProbe, FewShotEvalRecordsAndSpread) {
  std::mt19937 rng(4);
  std::normal_distribution<double> nd;
  auto make = [&](int n, Eigen::MatrixXd& x, std::vector<int>& y) {
    x.resize(n, 4);
    y.clear();
    for (int i = 0; i < n; ++i) {
      y.push_back(i % 2);
      for (int j = 0; j < 4; ++j) x(i, j) = nd(rng) + (j == 0 && i % 2 ? 1.0 : 0.0);
    }
  };
  Eigen::MatrixXd trx, tex;
  std::vector<int> try_, tey;
  make(80, trx, try_);
  make(60, tex, tey);
  ProbeConfig cfg;
  cfg.ks = {1, 4, 16};
  cfg.repeats = 5;
  const auto rep = few_shot_eval("t", trx, try_, tex, tey, cfg);
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_EQ(rep.fits.size(), 15u);
  for (const auto& row : rep.rows) {
    ASSERT_EQ(row.aurocs.size(), 5u);
    double mean = 0;
    for (double a : row.aurocs) mean += a / 5;
    double ss = 0;
    for (double a : row.aurocs) ss += (a - mean) * (a - mean);
    EXPECT_NEAR(row.mean_auroc, mean, 1e-12);
    EXPECT_NEAR(row.sd_auroc, std::sqrt(ss / 4), 1e-12);
  }
  EXPECT_GT(rep.rows[2].mean_auroc, 0.7);
  EXPECT_NE(rep.to_json().find("\"fits\""), std::string::npos);
}

TEST(LinearProbe, PointSymmetricDataHasZeroIntercept) {
  std::mt19937 rng(6);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd x(20, 3);
  std::vector<int> y(20);
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = nd(rng) + (j == 0 ? 0.5 : 0.0);
    x.row(i + 10) = -x.row(i);
    y[i] = i % 3 == 0 ? 0 : 1;
    y[i + 10] = 1 - y[i];
  }
  ProbeConfig cfg;
  cfg.tol = 1e-10;
  EXPECT_NEAR(fit_logreg(x, y, cfg).b(0), 0.0, 1e-6);
}

TEST(LinearProbe, ConvexObjectiveAgreesAcrossStarts) {
  std::mt19937 rng(7);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd x(40, 4);
  std::vector<int> y(40);
  for (int i = 0; i < 40; ++i) {
    y[i] = i % 2;
    for (int j = 0; j < 4; ++j) x(i, j) = nd(rng) + (y[i] && j < 2 ? 0.8 : 0.0);
  }
  ProbeConfig cfg;
  cfg.tol = 1e-9;
  const auto a = fit_logreg(x, y, cfg);
  Eigen::VectorXd init(5);
  init << 5, -5, 3, -3, 2;
  const auto b = fit_logreg(x, y, cfg, init);
  EXPECT_LT((a.W - b.W).cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_NEAR(a.b(0), b.b(0), 1e-3);
  EXPECT_LT(a.grad_inf_norm, cfg.tol);
}

TEST(LinearProbe, SeparableDataStaysFinite) {
  Eigen::MatrixXd x(6, 1);
  x << -3, -2, -1, 1, 2, 3;
  const std::vector<int> y = {0, 0, 0, 1, 1, 1};
  const auto m = fit_logreg(x, y, ProbeConfig{});
  EXPECT_TRUE(std::isfinite(m.W(0, 0)));
  const auto p = m.predict_proba(x);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(p(i, 1) > 0.5, y[i] == 1);
  for (std::size_t i = 1; i < m.objective_trace.size(); ++i) EXPECT_LE(m.objective_trace[i], m.objective_trace[i - 1] + 1e-12);
}

TEST(LinearProbe, SingleDrawPoolGivesZeroSpread) {
  Eigen::MatrixXd trx(4, 2), tex(6, 2);
  trx << 0, 1, 1, 0, 2, 2, 3, 1;
  tex << 0, 0, 1, 1, 2, 2, 3, 3, 0, 2, 2, 0;
  const std::vector<int> try_ = {0, 0, 1, 1}, tey = {0, 0, 1, 1, 0, 1};
  ProbeConfig cfg;
  cfg.ks = {2};
  cfg.repeats = 4;
  const auto rep = few_shot_eval("t", trx, try_, tex, tey, cfg);
  EXPECT_EQ(rep.rows[0].sd_auroc, 0.0);
}

TEST(LinearProbe, ShiftedLogitsKeepPredictions) {
  Eigen::MatrixXd x(30, 2);
  std::vector<int> y(30);
  std::mt19937 rng(8);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 30; ++i) {
    y[i] = i % 3;
    x(i, 0) = nd(rng) + y[i];
    x(i, 1) = nd(rng) - y[i];
  }
  const auto m = fit_logreg(x, y, ProbeConfig{});
  Eigen::MatrixXd logits = m.decision_function(x);
  Eigen::MatrixXd shifted = logits.array() + 7.5;
  for (int i = 0; i < 30; ++i) {
    Eigen::Index a, b;
    logits.row(i).maxCoeff(&a);
    shifted.row(i).maxCoeff(&b);
    EXPECT_EQ(a, b);
    Eigen::Index p;
    m.predict_proba(x).row(i).maxCoeff(&p);
    EXPECT_EQ(p, a);
  }
}
