#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "adamhf/nn.hpp"
#include "adamhf/tensor.hpp"

namespace adamhf {

struct GradCheckReport {
  std::string parameter_name;
  double max_relative_error = 0.0;
  bool passed = false;
};

// Central-difference check of every coordinate of every trainable block.
// `loss_fn` must rebuild the graph from the stored parameters on each call;
// it runs in 64-bit, so h=1e-5 leaves ~1e-9 of truncation error.
inline std::vector<GradCheckReport> grad_check(
    ParamStore<double>& params, const std::function<Tensor<double>()>& loss_fn,
    double tolerance = 1e-3, double h = 1e-5) {
  params.zero_grad();
  Tensor<double> loss = loss_fn();
  loss.backward();

  std::vector<GradCheckReport> reports;
  for (auto& item : params.items()) {
    if (!item.trainable) continue;
    GradCheckReport rep;
    rep.parameter_name = item.name;
    auto& vals = item.tensor.mut_value();
    const auto& analytic = item.tensor.grad();
    for (size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + h;
      const double up = loss_fn().item();
      vals[i] = keep - h;
      const double down = loss_fn().item();
      vals[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      rep.max_relative_error = std::max(rep.max_relative_error, rel);
    }
    rep.passed = rep.max_relative_error <= tolerance;
    reports.push_back(rep);
  }
  return reports;
}

}  // namespace adamhf
