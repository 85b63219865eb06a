#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "adamhf/atsa.hpp"
#include "adamhf/backbone.hpp"
#include "adamhf/config.hpp"
#include "adamhf/fusion.hpp"
#include "adamhf/pree.hpp"

namespace adamhf {

enum class EvalMode { Full, GenoMissing, PathoMissing };

inline const char* eval_mode_name(EvalMode m) {
  switch (m) {
    case EvalMode::Full: return "full";
    case EvalMode::GenoMissing: return "geno_missing";
    default: return "patho_missing";
  }
}

struct AblationFlags {
  bool no_atsa = false;  // keep every token (ATSA bypassed)
  bool no_pree = false;  // execute all experts, probability-weighted
  bool no_lmf = false;   // explicit bilinear contraction over flattened tokens
};

// Every discrete routing decision of one forward pass, recorded so a replayed
// pass (e.g. under finite differencing) takes identical branches while the
// continuous quantities are recomputed.
struct ForwardTrace {
  std::vector<GateDecision> gates_seg_p, gates_seg_g, gates_int_p, gates_int_g;
  AtsaTrace atsa_p, atsa_g;
  bool atsa_p_used = false, atsa_g_used = false;
};

template <class S>
struct ModelInput {
  Tensor<S> x_p, x_g;  // [n_p x d], [n_g x d]; undefined when absent
  bool patho_present = true;
  bool geno_present = true;
};

template <class S>
struct ModelOutput {
  Tensor<S> hazards;  // [t_bins], each in (0,1)
  Tensor<S> cls_p, cls_g;  // final class tokens (alignment operands)
};

template <class S>
class AdaMhfModel {
 public:
  RunConfig cfg;
  ParamStore<S> params;
  Tensor<S> cls_p, cls_g;  // learned class tokens, [d]
  TransformerBlock<S> seg_tf_p, seg_tf_g, int_tf_p, int_tf_g;
  Epeg<S> epeg_seg, epeg_int;
  PreeStack<S> seg_pree_p, seg_pree_g, int_pree_p, int_pree_g;
  AtsaParams<S> atsa_p, atsa_g;
  CrossModalAttention<S> cross;
  LowRankFusionParams<S> lmf;
  Mlp2<S> global_mlp;  // [cls_p ; cls_g] -> n_h
  Mlp2<S> head_mlp;    // n_h -> t_bins logits

  int n_h() const { return cfg.d_model; }

  static AdaMhfModel assemble(const RunConfig& cfg) {
    cfg.validate();
    AdaMhfModel m;
    m.cfg = cfg;
    const int d = cfg.d_model;
    std::mt19937_64 rng(cfg.seed);
    auto& ps = m.params;
    m.cls_p = ps.add("cls_p", randn_tensor<S>({d}, rng, 0.02));
    m.cls_g = ps.add("cls_g", randn_tensor<S>({d}, rng, 0.02));
    m.seg_tf_p = TransformerBlock<S>::init(ps, "seg.tf_p", d, rng);
    m.seg_tf_g = TransformerBlock<S>::init(ps, "seg.tf_g", d, rng);
    m.epeg_seg = Epeg<S>::init(ps, "seg.epeg", d, rng);
    m.seg_pree_p = PreeStack<S>::init(ps, "seg.pree_p", Modality::Patho, d,
                                      cfg.pree_layers, rng, cfg.frozen_seed);
    m.seg_pree_g = PreeStack<S>::init(ps, "seg.pree_g", Modality::Geno, d,
                                      cfg.pree_layers, rng, cfg.frozen_seed);
    m.atsa_p = AtsaParams<S>::init(ps, "atsa_p", d, cfg.k_min_patho, cfg.k_max_patho, rng);
    m.atsa_g = AtsaParams<S>::init(ps, "atsa_g", d, cfg.k_min_geno, cfg.k_max_geno, rng);
    m.cross = CrossModalAttention<S>::init(ps, "cross", d, rng);
    m.int_tf_p = TransformerBlock<S>::init(ps, "integ.tf_p", d, rng);
    m.int_tf_g = TransformerBlock<S>::init(ps, "integ.tf_g", d, rng);
    m.epeg_int = Epeg<S>::init(ps, "integ.epeg", d, rng);
    m.int_pree_p = PreeStack<S>::init(ps, "integ.pree_p", Modality::Patho, d,
                                      cfg.pree_layers, rng, cfg.frozen_seed);
    m.int_pree_g = PreeStack<S>::init(ps, "integ.pree_g", Modality::Geno, d,
                                      cfg.pree_layers, rng, cfg.frozen_seed);
    m.lmf = LowRankFusionParams<S>::init(ps, "lmf", d + 1, d + 1, cfg.rank_r,
                                         m_nh(cfg), rng);
    m.global_mlp = Mlp2<S>::init(ps, "global", 2 * d, m_nh(cfg), m_nh(cfg), rng);
    m.head_mlp = Mlp2<S>::init(ps, "head", m_nh(cfg), m_nh(cfg), cfg.t_bins, rng);
    return m;
  }

  // Build the per-modality input sequence. A missing modality never touches
  // its tensor data: it enters as a placeholder class token only.
  TokenSeq<S> entry_seq(const ModelInput<S>& in, Modality mod) const {
    const bool present = mod == Modality::Patho ? in.patho_present : in.geno_present;
    const Tensor<S>& cls = mod == Modality::Patho ? cls_p : cls_g;
    if (present) {
      const Tensor<S>& x = mod == Modality::Patho ? in.x_p : in.x_g;
      if (!x.defined() || x.rank() != 2 || x.dim(1) != cfg.d_model)
        throw std::invalid_argument("forward: modality tensor must be [n x d_model]");
      return make_seq<S>(x, as_row(cls), mod);
    }
    switch (cfg.placeholder) {
      case PlaceholderKind::Zeros:
        return placeholder_seq<S>(Tensor<S>::zeros({1, cfg.d_model}), mod);
      case PlaceholderKind::MeanToken: {
        // Stand-in borrowed from the present modality's raw tokens.
        const Tensor<S>& other = mod == Modality::Patho ? in.x_g : in.x_p;
        return placeholder_seq<S>(as_row(mean_rows(other)), mod);
      }
      default:
        return placeholder_seq<S>(as_row(cls), mod);
    }
  }

  ModelOutput<S> forward(const ModelInput<S>& in, AblationFlags ab = {},
                         ForwardTrace* record = nullptr,
                         const ForwardTrace* replay = nullptr) const {
    if (!in.patho_present && !in.geno_present)
      throw std::invalid_argument("forward: both modalities absent");

    auto x_p = entry_seq(in, Modality::Patho);
    auto x_g = entry_seq(in, Modality::Geno);

    // Segregation unit.
    x_p = seg_tf_p(x_p);
    x_p = x_p.present ? epeg_seg(x_p) : x_p;
    x_p = run_pree(seg_pree_p, x_p, ab, record ? &record->gates_seg_p : nullptr,
                   replay ? &replay->gates_seg_p : nullptr);
    x_g = seg_tf_g(x_g);
    x_g = run_pree(seg_pree_g, x_g, ab, record ? &record->gates_seg_g : nullptr,
                   replay ? &replay->gates_seg_g : nullptr);

    // Token selection / aggregation.
    if (!ab.no_atsa) {
      x_p = select_and_aggregate(atsa_p, x_p, record ? &record->atsa_p : nullptr,
                                 replay && replay->atsa_p_used ? &replay->atsa_p : nullptr);
      x_g = select_and_aggregate(atsa_g, x_g, record ? &record->atsa_g : nullptr,
                                 replay && replay->atsa_g_used ? &replay->atsa_g : nullptr);
      if (record) {
        record->atsa_p_used = x_p.present;
        record->atsa_g_used = x_g.present;
      }
    }

    // Cross-modal exchange.
    auto crossed = cross(x_g, x_p);
    x_g = crossed.first;
    x_p = crossed.second;

    // Integration unit: structurally identical, independent parameters.
    x_p = int_tf_p(x_p);
    x_p = x_p.present ? epeg_int(x_p) : x_p;
    x_p = run_pree(int_pree_p, x_p, ab, record ? &record->gates_int_p : nullptr,
                   replay ? &replay->gates_int_p : nullptr);
    x_g = int_tf_g(x_g);
    x_g = run_pree(int_pree_g, x_g, ab, record ? &record->gates_int_g : nullptr,
                   replay ? &replay->gates_int_g : nullptr);

    // Hierarchical fusion.
    auto local_p = x_p.present && x_p.n() > 0
                       ? append_one(mean_rows(x_p.non_class()))
                       : append_one(Tensor<S>::zeros({cfg.d_model}));
    auto local_g = x_g.present && x_g.n() > 0
                       ? append_one(mean_rows(x_g.non_class()))
                       : append_one(Tensor<S>::zeros({cfg.d_model}));
    Tensor<S> local;
    if (ab.no_lmf) {
      local = explicit_token_fusion(x_p, x_g);
    } else {
      local = low_rank_fuse(local_p, local_g, lmf);
    }
    auto global = global_fuse(x_p.cls(), x_g.cls(), global_mlp);
    auto blended = blend(local, global, cfg.beta);

    ModelOutput<S> out;
    out.hazards = hazard_head(blended, head_mlp, cfg.t_bins);
    out.cls_p = x_p.cls();
    out.cls_g = x_g.cls();
    return out;
  }

 private:
  static int m_nh(const RunConfig& cfg) { return cfg.d_model; }

  TokenSeq<S> run_pree(const PreeStack<S>& stack, const TokenSeq<S>& x, AblationFlags ab,
                       std::vector<GateDecision>* record,
                       const std::vector<GateDecision>* replay) const {
    std::vector<int> choices;
    const std::vector<int>* replay_ptr = nullptr;
    if (replay && x.present) {
      for (const auto& d : *replay) choices.push_back(d.chosen_expert_index);
      replay_ptr = &choices;
    }
    return pree_forward(stack, x, record, replay_ptr, ab.no_pree);
  }

  // The w/o-LMF ablation: contract the flattened (cls-appended-1) token data
  // of both modalities against a pseudo-random bilinear tensor generated on
  // the fly. Pure flop accounting; the result enters the graph as a constant.
  Tensor<S> explicit_token_fusion(const TokenSeq<S>& x_p, const TokenSeq<S>& x_g) const {
    auto flat = [](const TokenSeq<S>& x) {
      std::vector<S> v;
      if (x.present) {
        const auto& t = x.tokens.value();
        v.assign(t.begin(), t.end() - x.d());  // non-class tokens, row-major
      }
      v.push_back(S(1));
      return v;
    };
    const auto a = flat(x_p);
    const auto b = flat(x_g);
    const int nh = n_h();
    record_flops("fusion_explicit", 2ull * a.size() * b.size() * nh);
    std::vector<S> out(nh, S(0));
    for (size_t i = 0; i < a.size(); ++i)
      for (size_t j = 0; j < b.size(); ++j) {
        // Cheap deterministic pseudo-random weight per (i, j, h).
        std::uint64_t s = (static_cast<std::uint64_t>(i) * 2654435761u) ^
                          (static_cast<std::uint64_t>(j) * 40503u);
        const S ab = a[i] * b[j];
        for (int h = 0; h < nh; ++h) {
          std::uint64_t w = (s + static_cast<std::uint64_t>(h)) * 6364136223846793005ull + 1442695040888963407ull;
          const S wf = static_cast<S>(static_cast<double>(w >> 40) / double(1ull << 24) - 0.5);
          out[h] += ab * wf;
        }
      }
    const S norm = S(1) / static_cast<S>(std::sqrt(double(a.size()) * double(b.size())));
    for (auto& v : out) v *= norm;
    return Tensor<S>::from({nh}, std::move(out));
  }
};

}  // namespace adamhf
