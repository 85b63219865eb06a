#pragma once

#include <cmath>
#include <string>

#include "adamhf/nn.hpp"
#include "adamhf/tensor.hpp"

namespace adamhf {

enum class Modality { Patho, Geno };

// A token bag with its class token always at the last row. present == false
// marks a missing modality carrying only a placeholder class token.
template <class S>
struct TokenSeq {
  Tensor<S> tokens;  // [(N+1)×d]
  Modality modality = Modality::Patho;
  bool present = true;

  int n() const { return tokens.dim(0) - 1; }
  int d() const { return tokens.dim(1); }
  Tensor<S> non_class() const {
    std::vector<int> idx(n());
    for (int i = 0; i < n(); ++i) idx[i] = i;
    return gather_rows(tokens, idx);
  }
  Tensor<S> cls() const { return row(tokens, n()); }
};

template <class S>
TokenSeq<S> make_seq(Tensor<S> non_class_tokens, Tensor<S> cls_row, Modality m,
                     bool present = true) {
  TokenSeq<S> seq;
  seq.tokens = concat_rows<S>({std::move(non_class_tokens), std::move(cls_row)});
  seq.modality = m;
  seq.present = present;
  return seq;
}

// Placeholder sequence for a missing modality: the class token only.
template <class S>
TokenSeq<S> placeholder_seq(Tensor<S> cls_row, Modality m) {
  TokenSeq<S> seq;
  seq.tokens = as_row(row(std::move(cls_row), 0));
  seq.modality = m;
  seq.present = false;
  return seq;
}

// Pre-norm single-head transformer block: scaled dot-product self-attention
// and a 2-layer ReLU feed-forward, each behind a residual connection.
template <class S>
struct TransformerBlock {
  Tensor<S> ln1_g, ln1_b, ln2_g, ln2_b;
  Linear<S> wq, wk, wv, wo;
  Linear<S> ff1, ff2;
  int d = 0;

  static TransformerBlock init(ParamStore<S>& ps, const std::string& name, int d,
                               std::mt19937_64& rng, int ffn_width = 0) {
    if (ffn_width == 0) ffn_width = 2 * d;
    TransformerBlock t;
    t.d = d;
    t.ln1_g = ps.add(name + ".ln1.g", Tensor<S>::filled({d}, S(1)));
    t.ln1_b = ps.add(name + ".ln1.b", Tensor<S>::zeros({d}));
    t.ln2_g = ps.add(name + ".ln2.g", Tensor<S>::filled({d}, S(1)));
    t.ln2_b = ps.add(name + ".ln2.b", Tensor<S>::zeros({d}));
    t.wq = Linear<S>::init(ps, name + ".wq", d, d, rng);
    t.wk = Linear<S>::init(ps, name + ".wk", d, d, rng);
    t.wv = Linear<S>::init(ps, name + ".wv", d, d, rng);
    t.wo = Linear<S>::init(ps, name + ".wo", d, d, rng);
    t.ff1 = Linear<S>::init(ps, name + ".ff1", d, ffn_width, rng);
    t.ff2 = Linear<S>::init(ps, name + ".ff2", ffn_width, d, rng);
    return t;
  }

  TokenSeq<S> operator()(const TokenSeq<S>& x) const {
    if (!x.present) return x;  // missing modality passes through
    auto h = layer_norm(x.tokens, ln1_g, ln1_b);
    auto q = wq(h), k = wk(h), v = wv(h);
    auto scores = scale(matmul(q, transpose(k)), S(1) / std::sqrt(S(d)));
    auto attn = softmax(scores, 1);
    auto x1 = add(x.tokens, wo(matmul(attn, v)));
    auto h2 = layer_norm(x1, ln2_g, ln2_b);
    auto x2 = add(x1, ff2(relu(ff1(h2))));
    TokenSeq<S> out = x;
    out.tokens = x2;
    return out;
  }

  // Attention weights for a given input, for contract tests.
  Tensor<S> attention_weights(const TokenSeq<S>& x) const {
    auto h = layer_norm(x.tokens, ln1_g, ln1_b);
    auto scores = scale(matmul(wq(h), transpose(wk(h))), S(1) / std::sqrt(S(d)));
    return softmax(scores, 1);
  }
};

// Positional encoding stand-in: residual depthwise conv (kernel 7) over the
// non-class tokens; the class token is untouched. Pathology only.
template <class S>
struct Epeg {
  Tensor<S> kernel;  // [7×d]

  static Epeg init(ParamStore<S>& ps, const std::string& name, int d,
                   std::mt19937_64& rng) {
    Epeg e;
    e.kernel = ps.add(name + ".kernel", randn_tensor<S>({7, d}, rng, 0.02));
    return e;
  }

  TokenSeq<S> operator()(const TokenSeq<S>& x) const {
    if (x.modality != Modality::Patho)
      throw std::logic_error("epeg applied to non-pathology sequence");
    if (!x.present) return x;
    auto toks = x.non_class();
    auto conv = depthwise_conv1d(toks, kernel);
    TokenSeq<S> out = x;
    out.tokens = concat_rows<S>({add(toks, conv), as_row(x.cls())});
    return out;
  }
};

// Cross-modal attention per the two-stream co-attention equations:
// V = x_p W_p1, U = x_g W_g1, X = V Uᵀ; the column softmax reweights
// pathology tokens per genomic token and vice versa. Class tokens are
// excluded from X and carried through.
template <class S>
struct CrossModalAttention {
  Tensor<S> w_p1, w_g1, w_p2, w_g2;  // [d×d]

  static CrossModalAttention init(ParamStore<S>& ps, const std::string& name, int d,
                                  std::mt19937_64& rng) {
    CrossModalAttention c;
    c.w_p1 = ps.add(name + ".w_p1", xavier_tensor<S>({d, d}, rng));
    c.w_g1 = ps.add(name + ".w_g1", xavier_tensor<S>({d, d}, rng));
    c.w_p2 = ps.add(name + ".w_p2", xavier_tensor<S>({d, d}, rng));
    c.w_g2 = ps.add(name + ".w_g2", xavier_tensor<S>({d, d}, rng));
    return c;
  }

  // score_offset is a test hook: a constant added to every entry of X.
  std::pair<TokenSeq<S>, TokenSeq<S>> operator()(const TokenSeq<S>& x_g,
                                                 const TokenSeq<S>& x_p,
                                                 S score_offset = S(0)) const {
    if (!x_g.present && !x_p.present)
      throw std::logic_error("cross_modal_attention: both modalities absent");
    if (!x_g.present || !x_p.present) {
      // Present side passes through its own second projection.
      TokenSeq<S> g = x_g, p = x_p;
      if (x_p.present)
        p.tokens = concat_rows<S>(
            {matmul(x_p.non_class(), w_p2), as_row(x_p.cls())});
      if (x_g.present)
        g.tokens = concat_rows<S>(
            {matmul(x_g.non_class(), w_g2), as_row(x_g.cls())});
      return {g, p};
    }
    auto p_tok = x_p.non_class();  // [N_p×d]
    auto g_tok = x_g.non_class();  // [N_g×d]
    auto v = matmul(p_tok, w_p1);
    auto u = matmul(g_tok, w_g1);
    auto scores = matmul(v, transpose(u));  // [N_p×N_g]
    if (score_offset != S(0)) scores = affine(scores, S(1), score_offset);
    auto p_attn = softmax(scores, 0);  // columns sum to 1
    auto g_attn = softmax(scores, 1);  // rows sum to 1
    auto p_star = matmul(matmul(transpose(p_attn), p_tok), w_p2);  // [N_g×d]
    auto g_star = matmul(matmul(g_attn, g_tok), w_g2);             // [N_p×d]
    TokenSeq<S> out_p = x_p, out_g = x_g;
    out_p.tokens = concat_rows<S>({p_star, as_row(x_p.cls())});
    out_g.tokens = concat_rows<S>({g_star, as_row(x_g.cls())});
    return {out_g, out_p};
  }
};

}  // namespace adamhf
