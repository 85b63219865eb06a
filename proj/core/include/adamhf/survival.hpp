#pragma once

#include <optional>
#include <string>
#include <vector>

#include "adamhf/tensor.hpp"

namespace adamhf {

// ---- differentiable losses -------------------------------------------------

inline constexpr double kHazardEps = 1e-7;

// Censored discrete-time negative log-likelihood over hazards h[t_bins]:
//   -c·log f_s(t) - (1-c)·log f_s(t-1) - (1-c)·log f_h(t),  f_s(0) = 1,
// with hazards clamped to [eps, 1-eps] before the logs.
template <class S>
Tensor<S> nll_loss(const Tensor<S>& hazards, int t, int c) {
  const int bins = static_cast<int>(hazards.size());
  if (t < 1 || t > bins)
    throw std::logic_error("nll_loss: t=" + std::to_string(t) + " outside [1," +
                           std::to_string(bins) + "]");
  auto h = clamp(hazards, S(kHazardEps), S(1.0 - kHazardEps));
  auto log_h = log_op(h);
  auto log_1mh = log_op(affine(h, S(-1), S(1)));
  auto mask_leq = [&](int upto) {
    std::vector<S> m(bins, S(0));
    for (int i = 0; i < upto; ++i) m[i] = S(1);
    return Tensor<S>::from({bins}, std::move(m));
  };
  // log f_s(k) = sum_{i<=k} log(1-h_i)
  auto log_fs_t = dot(mask_leq(t), log_1mh);
  if (c == 1) return scale(log_fs_t, S(-1));
  auto log_fs_prev = dot(mask_leq(t - 1), log_1mh);
  auto log_h_t = dot(mask_leq(t), log_h);  // minus the prefix gives h at bin t
  auto log_h_only = sub(log_h_t, dot(mask_leq(t - 1), log_h));
  return scale(add(log_fs_prev, log_h_only), S(-1));
}

// Mean absolute difference between the two class-token representations.
template <class S>
Tensor<S> align_loss(const Tensor<S>& x_p_cls, const Tensor<S>& x_g_cls) {
  if (x_p_cls.shape() != x_g_cls.shape())
    throw std::logic_error("align_loss: length mismatch " + shape_str(x_p_cls.shape()) +
                           " vs " + shape_str(x_g_cls.shape()));
  auto diff = abs_op(sub(x_p_cls, x_g_cls));
  return scale(sum(diff), S(1) / S(diff.size()));
}

struct LossBreakdown {
  double l_surv = 0;
  double l_align = 0;
  double lambda = 0;
  double total() const { return l_surv + lambda * l_align; }
};

// ---- risk summaries --------------------------------------------------------

struct RiskOutput {
  std::vector<double> hazards;   // f_h(1..T)
  std::vector<double> survival;  // f_s(1..T), running product of (1-f_h)
  double risk = 0;               // sum_k (1 - f_s(k))
  double predicted_time = 0;     // sum_k f_s(k)
};

inline RiskOutput risk_from_hazards(const std::vector<double>& hazards) {
  RiskOutput out;
  out.hazards = hazards;
  double s = 1.0;
  for (double h : hazards) {
    s *= (1.0 - h);
    out.survival.push_back(s);
    out.risk += 1.0 - s;
    out.predicted_time += s;
  }
  return out;
}

// ---- concordance -----------------------------------------------------------

struct PredRecord {
  double risk = 0;
  double predicted_time = 0;
  int t = 0;
  int c = 0;
};

// The printed formula: 1/(n(n-1)) ΣΣ I(T_i<T_j)(1-c_j) over ordered pairs,
// using predicted times and censor flags only.
double c_index_paper(const std::vector<PredRecord>& preds);

// Harrell's C: over pairs with t_i < t_j and c_i == 0, concordant when
// risk_i > risk_j; risk ties count 0.5. Empty when no pair is comparable.
std::optional<double> c_index_harrell(const std::vector<PredRecord>& preds);

// ---- Kaplan-Meier and log-rank --------------------------------------------

struct KMCurve {
  std::vector<int> event_times;       // distinct bins with at least one event
  std::vector<int> at_risk;           // risk-set size entering each bin
  std::vector<double> survival;       // product-limit estimate after each bin
  std::string group;                  // "low" / "high" label
};

struct Observation {
  int t = 0;
  int c = 0;
};

KMCurve km_curve(const std::vector<Observation>& group, const std::string& label = "");

struct LogRankResult {
  double chi_square = 0;
  double p_value = 1;
  bool defined = false;
};

LogRankResult log_rank(const std::vector<Observation>& a, const std::vector<Observation>& b);

}  // namespace adamhf
