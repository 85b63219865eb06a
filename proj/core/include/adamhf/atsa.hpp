#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "adamhf/backbone.hpp"
#include "adamhf/nn.hpp"

namespace adamhf {

// Token budget / retention module. Scores every non-class token against the
// class token, keeps the highest-scoring n_keep tokens verbatim, and pools the
// rest into K - n_keep aggregate tokens so the sequence shrinks to exactly K
// tokens (plus the class token).
template <class S>
struct AtsaParams {
  Linear<S> reduce;    // d -> d/2
  Mlp2<S> score_mlp;   // [reduced token ; reduced cls] -> 1 logit
  Linear<S> alloc;     // cls -> budget logit
  Linear<S> refine;    // cls -> retention logit
  int k_min = 1;
  int k_max = 1;

  static AtsaParams init(ParamStore<S>& ps, const std::string& name, int d, int k_min,
                         int k_max, std::mt19937_64& rng) {
    if (d % 2 != 0) throw std::invalid_argument("AtsaParams: d must be even");
    if (k_min < 1 || k_max < k_min)
      throw std::invalid_argument("AtsaParams: need 1 <= k_min <= k_max");
    AtsaParams a;
    a.reduce = Linear<S>::init(ps, name + ".reduce", d, d / 2, rng);
    a.score_mlp = Mlp2<S>::init(ps, name + ".score", d, d / 2, 1, rng);
    a.alloc = Linear<S>::init(ps, name + ".alloc", d, 1, rng);
    a.refine = Linear<S>::init(ps, name + ".refine", d, 1, rng);
    a.k_min = k_min;
    a.k_max = k_max;
    return a;
  }
};

struct AtsaTrace {
  int k = 0;
  int n_keep = 0;
  double alpha = 0.0;
  std::vector<int> kept;        // original indices, score-descending
  std::vector<int> pool_order;  // remaining indices, score-descending
  std::vector<double> scores;   // softmax score per original token
};

// Softmax over tokens of score_mlp([reduce(token) ; reduce(cls)]).
template <class S>
Tensor<S> score_tokens(const AtsaParams<S>& p, const Tensor<S>& tokens,
                       const Tensor<S>& cls) {
  auto red_tok = p.reduce(tokens);                       // [N x d/2]
  auto red_cls = p.reduce(as_row(cls));                  // [1 x d/2]
  auto feat = concat_cols(red_tok, repeat_row(flatten(red_cls), tokens.dim(0)));
  auto logits = flatten(p.score_mlp(feat));              // [N]
  return softmax(logits, 0);
}

// Budget K = round(k_min + sigmoid(alloc(cls)) * (min(k_max, N) - k_min)),
// clamped to [1, N]. Rounding means the allocator only steers the integer
// budget; it receives no gradient.
template <class S>
int priority_allocator(const AtsaParams<S>& p, const Tensor<S>& cls, int n_tokens) {
  const double logit = static_cast<double>(flatten(p.alloc(as_row(cls))).value()[0]);
  const double gate = 1.0 / (1.0 + std::exp(-logit));
  const int hi = std::min(p.k_max, n_tokens);
  const int lo = std::min(p.k_min, hi);
  int k = static_cast<int>(std::lround(lo + gate * (hi - lo)));
  return std::clamp(k, 1, n_tokens);
}

// Retention ratio alpha = clamp(sigmoid(refine(cls)), 0.1, 0.9).
template <class S>
double selective_refiner(const AtsaParams<S>& p, const Tensor<S>& cls) {
  const double logit = static_cast<double>(flatten(p.refine(as_row(cls))).value()[0]);
  return std::clamp(1.0 / (1.0 + std::exp(-logit)), 0.1, 0.9);
}

// Returns the reduced sequence (K tokens + class token re-appended).
// Every token is first scaled by N * s_i so the scorer is trained through
// both the kept and the pooled paths. With `replay` all discrete decisions
// (K, n_keep, orderings) are taken from the recorded trace.
template <class S>
TokenSeq<S> select_and_aggregate(const AtsaParams<S>& p, const TokenSeq<S>& x,
                                 AtsaTrace* record = nullptr,
                                 const AtsaTrace* replay = nullptr) {
  if (!x.present) return x;
  const int n = x.n();
  auto body = x.non_class();
  auto cls = x.cls();
  auto scores = score_tokens(p, body, cls);  // [n], sums to 1

  int k, n_keep;
  std::vector<int> order(n);
  if (replay) {
    k = replay->k;
    n_keep = replay->n_keep;
    if (static_cast<int>(replay->kept.size()) != n_keep ||
        static_cast<int>(replay->pool_order.size()) != n - n_keep)
      throw std::logic_error("select_and_aggregate: inconsistent replay trace");
    std::copy(replay->kept.begin(), replay->kept.end(), order.begin());
    std::copy(replay->pool_order.begin(), replay->pool_order.end(),
              order.begin() + n_keep);
  } else {
    k = priority_allocator(p, cls, n);
    const double alpha = selective_refiner(p, cls);
    n_keep = k >= 2
                 ? std::clamp(static_cast<int>(std::lround(k * alpha)), 1, k - 1)
                 : 0;
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return scores.value()[a] > scores.value()[b];
    });
    if (record) {
      record->k = k;
      record->n_keep = n_keep;
      record->alpha = alpha;
      record->kept.assign(order.begin(), order.begin() + n_keep);
      record->pool_order.assign(order.begin() + n_keep, order.end());
      record->scores.assign(scores.value().begin(), scores.value().end());
    }
  }

  auto scaled = scale_rows(body, scale(scores, S(n)));
  TokenSeq<S> out;
  out.modality = x.modality;
  out.present = true;
  if (k >= n) {
    // Budget covers everything: keep the full (scaled) sequence.
    out.tokens = concat_rows<S>({scaled, as_row(cls)});
    if (record && !replay) {
      record->n_keep = n;
      record->kept.resize(n);
      std::iota(record->kept.begin(), record->kept.end(), 0);
      record->pool_order.clear();
    }
    return out;
  }
  std::vector<Tensor<S>> parts;
  if (n_keep > 0)
    parts.push_back(gather_rows(scaled, {order.begin(), order.begin() + n_keep}));
  if (k - n_keep > 0) {
    auto rest = gather_rows(scaled, {order.begin() + n_keep, order.end()});
    parts.push_back(adaptive_pool(rest, k - n_keep));
  }
  parts.push_back(as_row(cls));
  out.tokens = concat_rows(parts);
  return out;
}

}  // namespace adamhf
