#pragma once

#include <string>
#include <vector>

#include "adamhf/backbone.hpp"
#include "adamhf/nn.hpp"

namespace adamhf {

struct GateDecision {
  int layer_index = 0;
  int chosen_expert_index = 0;
  std::vector<double> gate_probs;
};

// One expert: a two-stage conv for pathology tokens, a SELU MLP for genomic.
template <class S>
struct PreeExpert {
  Modality kind = Modality::Patho;
  Tensor<S> conv1, conv2;  // [3×d×d], pathology
  Linear<S> lin1, lin2;    // genomic

  static PreeExpert init(ParamStore<S>& ps, const std::string& name, Modality kind, int d,
                         std::mt19937_64& rng) {
    PreeExpert e;
    e.kind = kind;
    if (kind == Modality::Patho) {
      e.conv1 = ps.add(name + ".conv1", xavier_tensor<S>({3, d, d}, rng));
      e.conv2 = ps.add(name + ".conv2", xavier_tensor<S>({3, d, d}, rng));
    } else {
      e.lin1 = Linear<S>::init(ps, name + ".lin1", d, d, rng);
      e.lin2 = Linear<S>::init(ps, name + ".lin2", d, d, rng);
    }
    return e;
  }

  Tensor<S> operator()(const Tensor<S>& tokens, Modality modality) const {
    if (modality != kind)
      throw std::logic_error("expert_forward: modality does not match expert kind");
    if (kind == Modality::Patho)
      return conv1d_tokens(relu(conv1d_tokens(tokens, conv1)), conv2);
    return lin2(selu(lin1(tokens)));
  }
};

// Expert count doubles per layer: 1, 2, 4. The residual MLP is frozen and
// shared-initialized across modalities from a dedicated seed stream.
template <class S>
struct PreeLayer {
  std::vector<PreeExpert<S>> experts;
  Mlp2<S> gate;          // mean-pooled tokens -> one logit per expert
  Mlp2<S> residual_mlp;  // frozen d -> d

  static PreeLayer init(ParamStore<S>& ps, const std::string& name, Modality kind, int d,
                        int layer_index, std::mt19937_64& rng, std::uint64_t frozen_seed) {
    PreeLayer l;
    const int n_experts = 1 << layer_index;  // layer 0,1,2 -> 1,2,4
    for (int e = 0; e < n_experts; ++e)
      l.experts.push_back(
          PreeExpert<S>::init(ps, name + ".expert" + std::to_string(e), kind, d, rng));
    l.gate = Mlp2<S>::init(ps, name + ".gate", d, d, n_experts, rng);
    std::mt19937_64 frozen_rng(frozen_seed + static_cast<std::uint64_t>(layer_index));
    l.residual_mlp =
        Mlp2<S>::init(ps, name + ".residual", d, d, d, frozen_rng, /*trainable=*/false);
    return l;
  }
};

template <class S>
GateDecision gate_select(const PreeLayer<S>& layer, const Tensor<S>& tokens, int layer_index,
                         Tensor<S>* probs_out = nullptr) {
  auto pooled = mean_rows(tokens);
  auto logits = layer.gate(pooled);
  auto probs = softmax(logits, 0);
  GateDecision dec;
  dec.layer_index = layer_index;
  for (size_t i = 0; i < probs.size(); ++i) {
    dec.gate_probs.push_back(static_cast<double>(probs.value()[i]));
    if (probs.value()[i] > probs.value()[dec.chosen_expert_index])
      dec.chosen_expert_index = static_cast<int>(i);  // ties stay at the lower index
  }
  if (probs_out) *probs_out = probs;
  return dec;
}

template <class S>
struct PreeStack {
  std::vector<PreeLayer<S>> layers;
  Modality modality = Modality::Patho;

  static PreeStack init(ParamStore<S>& ps, const std::string& name, Modality kind, int d,
                        int n_layers, std::mt19937_64& rng, std::uint64_t frozen_seed) {
    PreeStack s;
    s.modality = kind;
    for (int l = 0; l < n_layers; ++l)
      s.layers.push_back(PreeLayer<S>::init(ps, name + ".layer" + std::to_string(l), kind,
                                            d, l, rng, frozen_seed));
    return s;
  }
};

// Per layer: out = gate_prob_chosen · expert_chosen(in) + residual_mlp(in).
// The chosen expert's output is scaled by its gate probability so the gate
// receives gradient; the argmax itself is treated as a constant.
// `replay` forces the recorded expert choices (used by finite differencing).
// `dense` executes every expert weighted by its probability (the w/o-PREE
// flops ablation).
template <class S>
TokenSeq<S> pree_forward(const PreeStack<S>& stack, const TokenSeq<S>& x,
                         std::vector<GateDecision>* decisions = nullptr,
                         const std::vector<int>* replay = nullptr, bool dense = false) {
  if (x.modality != stack.modality)
    throw std::logic_error("pree_forward: sequence modality does not match the stack");
  if (!x.present) return x;
  TokenSeq<S> cur = x;
  for (size_t li = 0; li < stack.layers.size(); ++li) {
    const auto& layer = stack.layers[li];
    Tensor<S> probs;
    GateDecision dec = gate_select(layer, cur.tokens, static_cast<int>(li), &probs);
    if (replay) {
      if (li >= replay->size()) throw std::logic_error("pree_forward: replay underrun");
      dec.chosen_expert_index = (*replay)[li];
    }
    Tensor<S> routed;
    if (dense) {
      for (size_t e = 0; e < layer.experts.size(); ++e) {
        auto one_hot = Tensor<S>::zeros({static_cast<int>(layer.experts.size())});
        one_hot.mut_value()[e] = S(1);
        auto weighted = scale_rows(layer.experts[e](cur.tokens, stack.modality),
                                   repeat_scalar(dot(probs, one_hot), cur.tokens.dim(0)));
        routed = routed.defined() ? add(routed, weighted) : weighted;
      }
    } else {
      auto one_hot = Tensor<S>::zeros({static_cast<int>(layer.experts.size())});
      one_hot.mut_value()[dec.chosen_expert_index] = S(1);
      auto p_chosen = dot(probs, one_hot);
      auto expert_out = layer.experts[dec.chosen_expert_index](cur.tokens, stack.modality);
      routed = scale_rows(expert_out, repeat_scalar(p_chosen, cur.tokens.dim(0)));
    }
    cur.tokens = add(routed, layer.residual_mlp(cur.tokens));
    if (decisions) decisions->push_back(dec);
  }
  return cur;
}

}  // namespace adamhf
