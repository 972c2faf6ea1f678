#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace eagle {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// Adam with decoupled weight decay. The decay term is scaled by the
/// learning rate, so a zero learning rate leaves parameters untouched.
template <typename Scalar>
class AdamW {
public:
  struct Param {
    std::span<Scalar> value;
    std::span<const Scalar> grad;
    bool decay = true;
  };

  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  void step(std::span<const Param> params, double lr) {
    if (m_.size() != params.size()) {
      m_.assign(params.size(), {});
      v_.assign(params.size(), {});
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i].value.size(), 0.0);
        v_[i].assign(params[i].value.size(), 0.0);
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& m = m_[p];
      auto& v = v_[p];
      const auto& prm = params[p];
      const double shrink = prm.decay ? 1.0 - lr * cfg_.weight_decay : 1.0;
      for (std::size_t i = 0; i < prm.value.size(); ++i) {
        const double g = prm.grad[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
        prm.value[i] = static_cast<Scalar>(prm.value[i] * shrink - lr * update);
      }
    }
  }

  long steps() const noexcept { return t_; }

private:
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace eagle
