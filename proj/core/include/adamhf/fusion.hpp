#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "adamhf/nn.hpp"

namespace adamhf {

// Low-rank bilinear fusion. The implied full bilinear tensor is
// W = sum_i w_p^(i) (x) w_g^(i); we never materialize it. Factors are stored
// as matrices with one column per (rank, output) pair, rank-major:
// column i*n_h + h holds w^(i,h).
template <class S>
struct LowRankFusionParams {
  int rank = 0;
  int n_h = 0;
  Tensor<S> w_p;   // [len_p x rank*n_h]
  Tensor<S> w_g;   // [len_g x rank*n_h]
  Tensor<S> bias;  // [n_h]

  static LowRankFusionParams init(ParamStore<S>& ps, const std::string& name, int len_p,
                                  int len_g, int rank, int n_h, std::mt19937_64& rng) {
    if (rank <= 0) throw std::invalid_argument("LowRankFusionParams: rank must be positive");
    LowRankFusionParams f;
    f.rank = rank;
    f.n_h = n_h;
    f.w_p = ps.add(name + ".w_p", xavier_tensor<S>({len_p, rank * n_h}, rng));
    f.w_g = ps.add(name + ".w_g", xavier_tensor<S>({len_g, rank * n_h}, rng));
    f.bias = ps.add(name + ".bias", Tensor<S>::zeros({n_h}));
    return f;
  }
};

// Mean-pooled modality summary with a trailing constant 1, the bilinear
// operand. The constant keeps unimodal terms alive in the Hadamard product;
// a missing modality contributes the pure constant-1 vector.
template <class S>
Tensor<S> append_one(const Tensor<S>& v) {
  if (v.rank() != 1)
    throw std::invalid_argument("append_one: expected rank-1, got " + shape_str(v.shape()));
  auto one = Tensor<S>::filled({1}, S(1));
  return concat_vec<S>({v, one});
}

// out_h = sum_i (x_p . w_p^(i,h)) * (x_g . w_g^(i,h)) + bias_h.
// Cost is O(rank * (len_p + len_g) * n_h) instead of len_p * len_g * n_h.
template <class S>
Tensor<S> low_rank_fuse(const Tensor<S>& x_p, const Tensor<S>& x_g,
                        const LowRankFusionParams<S>& p) {
  if (p.rank <= 0) throw std::invalid_argument("low_rank_fuse: rank must be positive");
  if (x_p.rank() != 1 || x_g.rank() != 1 || x_p.dim(0) != p.w_p.dim(0) ||
      x_g.dim(0) != p.w_g.dim(0))
    throw std::invalid_argument("low_rank_fuse: operand/factor shape mismatch " +
                                shape_str(x_p.shape()) + " vs " + shape_str(p.w_p.shape()));
  auto z_p = matmul(as_row(x_p), p.w_p);  // [1 x rank*n_h]
  auto z_g = matmul(as_row(x_g), p.w_g);
  auto prod = mul(flatten(z_p), flatten(z_g));
  // Group-sum over ranks via a constant selector matrix.
  auto sel = Tensor<S>::zeros({p.rank * p.n_h, p.n_h});
  for (int i = 0; i < p.rank; ++i)
    for (int h = 0; h < p.n_h; ++h) sel.mut_value()[(i * p.n_h + h) * p.n_h + h] = S(1);
  return add(flatten(matmul(as_row(prod), sel)), p.bias);
}

// Reference/ablation path: contract against an explicitly materialized
// bilinear tensor W[len_p][len_g][n_h]. Not part of the autodiff graph.
template <class S>
std::vector<S> explicit_bilinear_fuse(const std::vector<S>& x_p, const std::vector<S>& x_g,
                                      const std::vector<S>& w, const std::vector<S>& bias) {
  const size_t lp = x_p.size(), lg = x_g.size(), nh = bias.size();
  if (w.size() != lp * lg * nh)
    throw std::invalid_argument("explicit_bilinear_fuse: W size mismatch");
  record_flops("fusion_explicit", 2ull * lp * lg * nh);
  std::vector<S> out(bias);
  for (size_t a = 0; a < lp; ++a)
    for (size_t b = 0; b < lg; ++b)
      for (size_t h = 0; h < nh; ++h) out[h] += x_p[a] * x_g[b] * w[(a * lg + b) * nh + h];
  return out;
}

template <class S>
Tensor<S> global_fuse(const Tensor<S>& x_p_cls, const Tensor<S>& x_g_cls,
                      const Mlp2<S>& mlp) {
  return mlp(concat_vec<S>({x_p_cls, x_g_cls}));
}

template <class S>
Tensor<S> blend(const Tensor<S>& local, const Tensor<S>& global, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0))
    throw std::invalid_argument("blend: beta must be in [0,1], got " + std::to_string(beta));
  return add(scale(local, static_cast<S>(beta)), scale(global, static_cast<S>(1.0 - beta)));
}

template <class S>
Tensor<S> hazard_head(const Tensor<S>& blended, const Mlp2<S>& head_mlp, int t_bins) {
  if (t_bins < 2) throw std::invalid_argument("hazard_head: t_bins must be >= 2");
  auto hazards = sigmoid(head_mlp(blended));
  if (static_cast<int>(hazards.size()) != t_bins)
    throw std::logic_error("hazard_head: head output width != t_bins");
  return hazards;
}

}  // namespace adamhf
