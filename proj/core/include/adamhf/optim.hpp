#pragma once

#include <cmath>
#include <vector>

#include "adamhf/nn.hpp"

namespace adamhf {

// Adam with bias correction. Moment buffers are laid out in parameter
// registration order; only trainable parameters take steps.
template <class S>
class Adam {
 public:
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit Adam(const ParamStore<S>& ps, double lr_ = 1e-3) : lr(lr_) {
    for (const auto& it : ps.items())
      if (it.trainable) {
        m_.emplace_back(it.tensor.size(), 0.0);
        v_.emplace_back(it.tensor.size(), 0.0);
      }
  }

  void step(ParamStore<S>& ps) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, t_);
    const double bc2 = 1.0 - std::pow(beta2, t_);
    size_t slot = 0;
    for (auto& it : ps.items()) {
      if (!it.trainable) continue;
      auto& m = m_[slot];
      auto& v = v_[slot];
      ++slot;
      const auto& g = it.tensor.grad();
      auto& w = it.tensor.mut_value();
      if (g.empty()) continue;  // parameter unused in this graph
      for (size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
        const double mh = m[i] / bc1;
        const double vh = v[i] / bc2;
        w[i] -= static_cast<S>(lr * mh / (std::sqrt(vh) + eps));
      }
    }
  }

 private:
  long long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace adamhf
