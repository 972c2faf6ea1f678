#pragma once

// Independent reference implementations used to check the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

namespace oracle {

/// O(n^2) Mann-Whitney: P(s_pos > s_neg) + 0.5 P(tie).
inline double pairwise_auroc(std::span<const double> s, std::span<const int> y) {
  double num = 0;
  std::size_t np = 0, nn = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] == 1) ++np; else ++nn;
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] == 1) continue;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return num / (static_cast<double>(np) * static_cast<double>(nn));
}

inline double psi(double x, double y) { return x > y ? 1.0 : (x == y ? 0.5 : 0.0); }

struct StructuralDeLong {
  double auc_a, auc_b, var_a, var_b, cov;
};

/// DeLong variance from explicit structural components V10 / V01.
inline StructuralDeLong structural_delong(std::span<const double> a, std::span<const double> b, std::span<const int> y) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] == 1 ? pos : neg).push_back(i);
  const double m = static_cast<double>(pos.size()), n = static_cast<double>(neg.size());
  auto components = [&](std::span<const double> s, std::vector<double>& v10, std::vector<double>& v01) {
    v10.assign(pos.size(), 0.0);
    v01.assign(neg.size(), 0.0);
    for (std::size_t i = 0; i < pos.size(); ++i) {
      for (std::size_t j = 0; j < neg.size(); ++j) {
        const double p = psi(s[pos[i]], s[neg[j]]);
        v10[i] += p / n;
        v01[j] += p / m;
      }
    }
    return std::accumulate(v10.begin(), v10.end(), 0.0) / m;
  };
  std::vector<double> a10, a01, b10, b01;
  StructuralDeLong r{};
  r.auc_a = components(a, a10, a01);
  r.auc_b = components(b, b10, b01);
  auto cov = [](const std::vector<double>& u, double mu, const std::vector<double>& v, double mv) {
    double s = 0;
    for (std::size_t i = 0; i < u.size(); ++i) s += (u[i] - mu) * (v[i] - mv);
    return s / static_cast<double>(u.size() - 1);
  };
  r.var_a = cov(a10, r.auc_a, a10, r.auc_a) / m + cov(a01, r.auc_a, a01, r.auc_a) / n;
  r.var_b = cov(b10, r.auc_b, b10, r.auc_b) / m + cov(b01, r.auc_b, b01, r.auc_b) / n;
  r.cov = cov(a10, r.auc_a, b10, r.auc_b) / m + cov(a01, r.auc_a, b01, r.auc_b) / n;
  return r;
}

/// Two-sided paired bootstrap test of AUROC(a) - AUROC(b), resampling
/// positives and negatives separately; z = diff / sd(boot diffs).
inline double bootstrap_p(std::span<const double> a, std::span<const double> b, std::span<const int> y, int reps,
                          std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] == 1 ? pos : neg).push_back(i);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> up(0, pos.size() - 1), un(0, neg.size() - 1);
  std::vector<double> diffs;
  std::vector<double> sa, sb;
  std::vector<int> yy;
  for (int r = 0; r < reps; ++r) {
    sa.clear();
    sb.clear();
    yy.clear();
    for (std::size_t i = 0; i < pos.size(); ++i) {
      const auto k = pos[up(rng)];
      sa.push_back(a[k]);
      sb.push_back(b[k]);
      yy.push_back(1);
    }
    for (std::size_t i = 0; i < neg.size(); ++i) {
      const auto k = neg[un(rng)];
      sa.push_back(a[k]);
      sb.push_back(b[k]);
      yy.push_back(0);
    }
    diffs.push_back(pairwise_auroc(sa, yy) - pairwise_auroc(sb, yy));
  }
  const double mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) / reps;
  double var = 0;
  for (double d : diffs) var += (d - mean) * (d - mean);
  const double sd = std::sqrt(var / (reps - 1));
  const double diff = pairwise_auroc(a, y) - pairwise_auroc(b, y);
  if (sd == 0) return diff == 0 ? 1.0 : 0.0;
  return std::erfc(std::abs(diff / sd) / std::sqrt(2.0));
}

/// Benjamini-Hochberg by definition: q_(i) = min_{j >= i} min(1, m p_(j) / j).
inline std::vector<double> bh_direct(std::span<const double> p) {
  const std::size_t m = p.size();
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    // rank of p[i] among all (ties ordered by index)
    double best = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
      std::size_t rank_j = 1;
      for (std::size_t l = 0; l < m; ++l) {
        if (p[l] < p[j] || (p[l] == p[j] && l < j)) ++rank_j;
      }
      if (p[j] >= p[i]) best = std::min(best, std::min(1.0, static_cast<double>(m) * p[j] / static_cast<double>(rank_j)));
    }
    out[i] = best;
  }
  return out;
}

/// Bisection root of f on [lo, hi] (f(lo), f(hi) of opposite sign).
inline double bisect(const std::function<double(double)>& f, double lo, double hi, int iters = 200) {
  double flo = f(lo);
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Nearest-rank order statistic (1-based rank ceil(p/100 N), at least 1).
inline std::size_t nearest_rank(double percentile, std::size_t n) {
  const auto r = static_cast<std::size_t>(std::ceil(percentile / 100.0 * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(r, 1, n);
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("eagle_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
