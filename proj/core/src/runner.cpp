#include "adamhf/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "adamhf/flops.hpp"
#include "adamhf/optim.hpp"

namespace adamhf {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  std::uint64_t h = a * 0x9e3779b97f4a7c15ull + 0x243f6a8885a308d3ull;
  h ^= b + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  h ^= c + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

template <class S>
std::pair<Tensor<S>, ModelOutput<S>> forward_loss(const AdaMhfModel<S>& model,
                                                  const ModelInput<S>& in, int t, int c,
                                                  AblationFlags ab = {},
                                                  ForwardTrace* record = nullptr,
                                                  const ForwardTrace* replay = nullptr) {
  auto out = model.forward(in, ab, record, replay);
  auto l_surv = nll_loss(out.hazards, t, c);
  auto l_align = align_loss(out.cls_p, out.cls_g);
  auto total = add(l_surv, scale(l_align, static_cast<S>(model.cfg.lambda)));
  return {total, out};
}

struct EvalResult {
  double mean_loss = 0;
  std::vector<PredRecord> preds;
};

EvalResult evaluate_fold(const AdaMhfModel<float>& model, const LoadedDataset& data,
                         const std::vector<int>& indices, EvalMode mode) {
  EvalResult r;
  for (int idx : indices) {
    const auto& bag = data.samples[idx];
    auto in = to_input<float>(bag, mode);
    auto [loss, out] = forward_loss(model, in, bag.t, bag.c);
    r.mean_loss += loss.item();
    std::vector<double> hz(out.hazards.value().begin(), out.hazards.value().end());
    auto risk = risk_from_hazards(hz);
    r.preds.push_back({risk.risk, risk.predicted_time, bag.t, bag.c});
  }
  if (!indices.empty()) r.mean_loss /= static_cast<double>(indices.size());
  return r;
}

// Median-risk split of the validation predictions into low/high groups.
std::pair<std::vector<Observation>, std::vector<Observation>> split_by_median_risk(
    const std::vector<PredRecord>& preds) {
  std::vector<double> risks;
  for (const auto& p : preds) risks.push_back(p.risk);
  std::vector<double> sorted = risks;
  std::sort(sorted.begin(), sorted.end());
  const double med = sorted.empty() ? 0.0
                     : sorted.size() % 2 ? sorted[sorted.size() / 2]
                                         : 0.5 * (sorted[sorted.size() / 2 - 1] +
                                                  sorted[sorted.size() / 2]);
  std::pair<std::vector<Observation>, std::vector<Observation>> groups;
  for (size_t i = 0; i < preds.size(); ++i) {
    Observation o{preds[i].t, preds[i].c};
    (risks[i] <= med ? groups.first : groups.second).push_back(o);
  }
  return groups;
}

void fill_metrics(EpochStat& st, const std::vector<PredRecord>& preds) {
  auto ch = c_index_harrell(preds);
  st.c_index_harrell = ch ? *ch : std::numeric_limits<double>::quiet_NaN();
  st.c_index_paper = preds.size() >= 2 ? c_index_paper(preds)
                                       : std::numeric_limits<double>::quiet_NaN();
  auto [low, high] = split_by_median_risk(preds);
  if (!low.empty() && !high.empty()) {
    auto lr = log_rank(low, high);
    st.logrank_chi = lr.chi_square;
    st.logrank_p = lr.defined ? lr.p_value : std::numeric_limits<double>::quiet_NaN();
  } else {
    st.logrank_chi = 0;
    st.logrank_p = std::numeric_limits<double>::quiet_NaN();
  }
}

struct TrainedFold {
  FoldReport report;
  AdaMhfModel<float> model;
};

TrainedFold train_one_fold(const RunConfig& cfg, const LoadedDataset& data,
                           const FoldSplit& fold, const std::vector<int>& train_idx,
                           const std::vector<int>& valid_idx) {
  TrainedFold tf;
  tf.report.fold_index = fold.fold_index;
  RunConfig mcfg = cfg;
  mcfg.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(fold.fold_index));
  tf.model = AdaMhfModel<float>::assemble(mcfg);
  auto& model = tf.model;
  Adam<float> opt(model.params, cfg.lr);

  std::vector<int> order = train_idx;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(cfg.seed, fold.fold_index, epoch + 1));
    std::shuffle(order.begin(), order.end(), rng);
    double train_loss = 0;
    int in_batch = 0;
    model.params.zero_grad();
    for (int idx : order) {
      const auto& bag = data.samples[idx];
      auto in = to_input<float>(bag, EvalMode::Full);
      auto [loss, out] = forward_loss(model, in, bag.t, bag.c);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        tf.report.aborted = true;
        tf.report.abort_reason = "non-finite loss at fold " +
                                 std::to_string(fold.fold_index) + " epoch " +
                                 std::to_string(epoch) + " sample " + bag.sample_id;
        return tf;
      }
      train_loss += lv;
      loss.backward();
      if (++in_batch == cfg.batch_size) {
        opt.step(model.params);
        model.params.zero_grad();
        in_batch = 0;
      }
    }
    if (in_batch > 0) {
      opt.step(model.params);
      model.params.zero_grad();
    }
    EpochStat st;
    st.epoch = epoch;
    st.train_loss = order.empty() ? 0 : train_loss / static_cast<double>(order.size());
    auto ev = evaluate_fold(model, data, valid_idx, EvalMode::Full);
    st.valid_loss = ev.mean_loss;
    fill_metrics(st, ev.preds);
    tf.report.epochs.push_back(st);
    if (epoch == cfg.epochs - 1) tf.report.valid_preds = ev.preds;
  }
  EpochStat last;
  if (!tf.report.epochs.empty()) {
    last = tf.report.epochs.back();
  } else {
    // Zero-epoch run: report the untrained model's validation metrics.
    auto ev = evaluate_fold(model, data, valid_idx, EvalMode::Full);
    fill_metrics(last, ev.preds);
    tf.report.valid_preds = ev.preds;
  }
  tf.report.c_index_harrell = last.c_index_harrell;
  tf.report.c_index_harrell_defined = !std::isnan(last.c_index_harrell);
  tf.report.c_index_paper = last.c_index_paper;
  tf.report.logrank_chi = last.logrank_chi;
  tf.report.logrank_p = last.logrank_p;
  tf.report.logrank_defined = !std::isnan(last.logrank_p);
  // Flop count of one full-mode validation forward.
  if (!valid_idx.empty()) {
    FlopLedger ledger;
    {
      FlopScope scope(ledger);
      auto in = to_input<float>(data.samples[valid_idx.front()], EvalMode::Full);
      model.forward(in);
    }
    tf.report.forward_flops = ledger.total();
  }
  return tf;
}

void write_fold_outputs(const std::string& out_dir, const FoldReport& rep) {
  const std::string dir = out_dir + "/fold_" + std::to_string(rep.fold_index);
  std::string metrics =
      "epoch,train_loss,valid_loss,c_index_harrell,c_index_paper,"
      "logrank_chi_square,logrank_p\n";
  for (const auto& e : rep.epochs)
    metrics += std::to_string(e.epoch) + "," + fmt(e.train_loss) + "," +
               fmt(e.valid_loss) + "," + fmt(e.c_index_harrell) + "," +
               fmt(e.c_index_paper) + "," + fmt(e.logrank_chi) + "," + fmt(e.logrank_p) +
               "\n";
  write_text(dir + "/metrics.csv", metrics);

  std::string km = "bin,survival,group\n";
  auto [low, high] = split_by_median_risk(rep.valid_preds);
  for (const auto* grp : {&low, &high}) {
    auto curve = km_curve(*grp, grp == &low ? "low" : "high");
    for (size_t i = 0; i < curve.event_times.size(); ++i)
      km += std::to_string(curve.event_times[i]) + "," + fmt(curve.survival[i]) + "," +
            curve.group + "\n";
  }
  write_text(dir + "/km.csv", km);
}

std::string summary_csv(const std::vector<FoldReport>& reports) {
  std::string s = "scope,metric,value\n";
  std::vector<double> ch, cp, fl;
  for (const auto& r : reports) {
    const std::string scope = "fold_" + std::to_string(r.fold_index);
    s += scope + ",aborted," + (r.aborted ? "1" : "0") + "\n";
    s += scope + ",c_index_harrell," + fmt(r.c_index_harrell) + "\n";
    s += scope + ",c_index_paper," + fmt(r.c_index_paper) + "\n";
    s += scope + ",logrank_chi_square," + fmt(r.logrank_chi) + "\n";
    s += scope + ",logrank_p," + fmt(r.logrank_p) + "\n";
    s += scope + ",forward_flops," + std::to_string(r.forward_flops) + "\n";
    if (!r.aborted) {
      ch.push_back(r.c_index_harrell);
      cp.push_back(r.c_index_paper);
      fl.push_back(static_cast<double>(r.forward_flops));
    }
  }
  auto [chm, chs] = mean_std(ch);
  auto [cpm, cps] = mean_std(cp);
  s += "overall,c_index_harrell_mean," + fmt(chm) + "\n";
  s += "overall,c_index_harrell_std," + fmt(chs) + "\n";
  s += "overall,c_index_paper_mean," + fmt(cpm) + "\n";
  s += "overall,c_index_paper_std," + fmt(cps) + "\n";
  return s;
}

std::string routing_trace_csv(const std::vector<TrainedFold>& folds,
                              const LoadedDataset& data,
                              const std::vector<std::vector<int>>& valid_sets) {
  std::string s = "fold,sample_id,stage,key,value\n";
  for (size_t f = 0; f < folds.size(); ++f) {
    if (folds[f].report.aborted) continue;
    for (int idx : valid_sets[f]) {
      const auto& bag = data.samples[idx];
      ForwardTrace trace;
      auto in = to_input<float>(bag, EvalMode::Full);
      folds[f].model.forward(in, {}, &trace);
      const std::string pre = std::to_string(folds[f].report.fold_index) + "," +
                              bag.sample_id + ",";
      auto atsa_rows = [&](const AtsaTrace& a, const char* stage, bool used) {
        if (!used) return;
        s += pre + stage + ",k," + std::to_string(a.k) + "\n";
        s += pre + stage + ",n_keep," + std::to_string(a.n_keep) + "\n";
        s += pre + stage + ",alpha," + fmt(a.alpha) + "\n";
      };
      atsa_rows(trace.atsa_p, "atsa_p", trace.atsa_p_used);
      atsa_rows(trace.atsa_g, "atsa_g", trace.atsa_g_used);
      auto pree_rows = [&](const std::vector<GateDecision>& gs, const char* stage) {
        for (const auto& g : gs) {
          const std::string key = "layer" + std::to_string(g.layer_index);
          s += pre + stage + "," + key + "_expert," +
               std::to_string(g.chosen_expert_index) + "\n";
          s += pre + stage + "," + key + "_gate_prob," +
               fmt(g.gate_probs[g.chosen_expert_index]) + "\n";
        }
      };
      pree_rows(trace.gates_seg_p, "pree_seg_p");
      pree_rows(trace.gates_seg_g, "pree_seg_g");
      pree_rows(trace.gates_int_p, "pree_int_p");
      pree_rows(trace.gates_int_g, "pree_int_g");
    }
  }
  return s;
}

std::vector<int> ids_to_indices(const LoadedDataset& data, const std::vector<std::string>& ids) {
  std::vector<int> out;
  for (const auto& id : ids)
    for (size_t i = 0; i < data.samples.size(); ++i)
      if (data.samples[i].sample_id == id) {
        out.push_back(static_cast<int>(i));
        break;
      }
  return out;
}

std::vector<TrainedFold> train_all(const RunConfig& cfg, const LoadedDataset& data,
                                   std::vector<std::vector<int>>* valid_sets_out) {
  auto folds = make_folds(data.manifest, 5, cfg.seed);
  std::vector<TrainedFold> trained;
  if (valid_sets_out) valid_sets_out->clear();
  for (const auto& fold : folds) {
    auto train_idx = ids_to_indices(data, fold.train_ids);
    auto valid_idx = ids_to_indices(data, fold.valid_ids);
    trained.push_back(train_one_fold(cfg, data, fold, train_idx, valid_idx));
    if (valid_sets_out) valid_sets_out->push_back(valid_idx);
  }
  return trained;
}

}  // namespace

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  std::vector<double> v;
  for (double x : xs)
    if (!std::isnan(x)) v.push_back(x);
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
  return {mean, std::sqrt(var)};
}

LoadedDataset load_dataset(const RunConfig& cfg) {
  LoadedDataset data;
  data.manifest = load_manifest(cfg.dataset);
  for (size_t i = 0; i < data.manifest.rows.size(); ++i) {
    auto bag = load_sample(data.manifest, data.manifest.rows[i]);
    subsample_patches(bag.x_p, bag.n_p, bag.d, cfg.n_s,
                      mix_seed(cfg.seed, 0x5a5a + i));
    data.samples.push_back(std::move(bag));
  }
  return data;
}

template <class S>
ModelInput<S> to_input(const SampleBag& bag, EvalMode mode) {
  ModelInput<S> in;
  in.patho_present = mode != EvalMode::PathoMissing;
  in.geno_present = mode != EvalMode::GenoMissing;
  if (in.patho_present) {
    std::vector<S> v(bag.x_p.begin(), bag.x_p.end());
    in.x_p = Tensor<S>::from({bag.n_p, bag.d}, std::move(v));
  }
  if (in.geno_present) {
    std::vector<S> v(bag.x_g.begin(), bag.x_g.end());
    in.x_g = Tensor<S>::from({bag.n_g, bag.d}, std::move(v));
  }
  return in;
}

template ModelInput<float> to_input<float>(const SampleBag&, EvalMode);
template ModelInput<double> to_input<double>(const SampleBag&, EvalMode);

void save_params(const ParamStore<float>& ps, const std::string& path) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write("AMHP", 4);
  auto u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  u32(static_cast<std::uint32_t>(ps.items().size()));
  for (const auto& it : ps.items()) {
    u32(static_cast<std::uint32_t>(it.name.size()));
    out.write(it.name.data(), static_cast<std::streamsize>(it.name.size()));
    u32(static_cast<std::uint32_t>(it.tensor.size()));
    out.write(reinterpret_cast<const char*>(it.tensor.value().data()),
              static_cast<std::streamsize>(it.tensor.size() * sizeof(float)));
  }
}

void load_params(ParamStore<float>& ps, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "AMHP", 4) != 0)
    throw std::runtime_error("bad parameter file magic in " + path);
  auto u32 = [&]() {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  const std::uint32_t count = u32();
  if (count != ps.items().size())
    throw std::runtime_error("parameter count mismatch in " + path);
  for (auto& it : ps.items()) {
    const std::uint32_t nl = u32();
    std::string name(nl, '\0');
    in.read(name.data(), nl);
    if (name != it.name)
      throw std::runtime_error("parameter name mismatch: expected " + it.name + " got " +
                               name);
    const std::uint32_t nv = u32();
    if (nv != it.tensor.size())
      throw std::runtime_error("parameter size mismatch for " + it.name);
    in.read(reinterpret_cast<char*>(it.tensor.mut_value().data()),
            static_cast<std::streamsize>(nv * sizeof(float)));
  }
  if (!in) throw std::runtime_error("truncated parameter file " + path);
}

std::vector<FoldReport> run_train(const RunConfig& cfg, const std::string& out_dir) {
  auto data = load_dataset(cfg);
  std::vector<std::vector<int>> valid_sets;
  auto trained = train_all(cfg, data, &valid_sets);
  std::vector<FoldReport> reports;
  for (const auto& tf : trained) reports.push_back(tf.report);
  if (!out_dir.empty()) {
    for (const auto& tf : trained) {
      write_fold_outputs(out_dir, tf.report);
      save_params(tf.model.params,
                  out_dir + "/fold_" + std::to_string(tf.report.fold_index) + "/model.bin");
    }
    write_text(out_dir + "/summary.csv", summary_csv(reports));
    write_text(out_dir + "/routing_trace.csv", routing_trace_csv(trained, data, valid_sets));
  }
  return reports;
}

namespace {

// Rebuilds each fold's model; loads saved weights when present, otherwise
// trains (and saves when model_dir is non-empty).
std::vector<TrainedFold> obtain_folds(const RunConfig& cfg, const LoadedDataset& data,
                                      const std::string& model_dir,
                                      std::vector<std::vector<int>>& valid_sets) {
  auto folds = make_folds(data.manifest, 5, cfg.seed);
  bool all_present = !model_dir.empty();
  for (const auto& f : folds)
    if (all_present &&
        !fs::exists(model_dir + "/fold_" + std::to_string(f.fold_index) + "/model.bin"))
      all_present = false;
  if (!all_present) {
    std::vector<TrainedFold> trained = train_all(cfg, data, &valid_sets);
    if (!model_dir.empty())
      for (const auto& tf : trained)
        save_params(tf.model.params, model_dir + "/fold_" +
                                         std::to_string(tf.report.fold_index) + "/model.bin");
    return trained;
  }
  std::vector<TrainedFold> out;
  valid_sets.clear();
  for (const auto& fold : folds) {
    TrainedFold tf;
    tf.report.fold_index = fold.fold_index;
    RunConfig mcfg = cfg;
    mcfg.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(fold.fold_index));
    tf.model = AdaMhfModel<float>::assemble(mcfg);
    load_params(tf.model.params,
                model_dir + "/fold_" + std::to_string(fold.fold_index) + "/model.bin");
    out.push_back(std::move(tf));
    valid_sets.push_back(ids_to_indices(data, fold.valid_ids));
  }
  return out;
}

}  // namespace

std::vector<FoldReport> run_eval(const RunConfig& cfg, EvalMode mode,
                                 const std::string& model_dir) {
  auto data = load_dataset(cfg);
  std::vector<std::vector<int>> valid_sets;
  auto trained = obtain_folds(cfg, data, model_dir, valid_sets);
  std::vector<FoldReport> reports;
  for (size_t f = 0; f < trained.size(); ++f) {
    FoldReport rep = trained[f].report;
    if (!rep.aborted) {
      auto ev = evaluate_fold(trained[f].model, data, valid_sets[f], mode);
      EpochStat st;
      fill_metrics(st, ev.preds);
      rep.valid_preds = ev.preds;
      rep.c_index_harrell = st.c_index_harrell;
      rep.c_index_harrell_defined = !std::isnan(st.c_index_harrell);
      rep.c_index_paper = st.c_index_paper;
      rep.logrank_chi = st.logrank_chi;
      rep.logrank_p = st.logrank_p;
      rep.logrank_defined = !std::isnan(st.logrank_p);
    }
    reports.push_back(std::move(rep));
  }
  return reports;
}

std::vector<ModeReport> run_bench_missing(const RunConfig& cfg, const std::string& model_dir,
                                          const std::string& out_dir) {
  std::vector<ModeReport> table;
  std::string csv = "scope,metric,value\n";
  for (EvalMode mode : {EvalMode::Full, EvalMode::GenoMissing, EvalMode::PathoMissing}) {
    auto reports = run_eval(cfg, mode, model_dir);
    ModeReport mr;
    mr.mode = mode;
    for (const auto& r : reports) {
      const double v = r.aborted || !r.c_index_harrell_defined
                           ? std::numeric_limits<double>::quiet_NaN()
                           : r.c_index_harrell;
      mr.per_fold.push_back(v);
      csv += std::string(eval_mode_name(mode)) + "_fold_" +
             std::to_string(r.fold_index) + ",c_index_harrell," + fmt(v) + "\n";
    }
    auto [m, s] = mean_std(mr.per_fold);
    mr.mean = m;
    mr.stddev = s;
    table.push_back(std::move(mr));
  }
  for (const auto& mr : table) {
    csv += std::string(eval_mode_name(mr.mode)) + "_mean,c_index_harrell," + fmt(mr.mean) +
           "\n";
    csv += std::string(eval_mode_name(mr.mode)) + "_std,c_index_harrell," +
           fmt(mr.stddev) + "\n";
  }
  if (!out_dir.empty()) write_text(out_dir + "/summary.csv", csv);
  return table;
}

std::vector<FlopsRow> run_flops(const RunConfig& cfg, const std::string& out_dir,
                                int n_p_override) {
  const int n_p = n_p_override > 0 ? n_p_override : cfg.n_s;
  const int n_g = 6;
  auto model = AdaMhfModel<float>::assemble(cfg);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0xf10b5));
  SampleBag bag;
  bag.sample_id = "flops_probe";
  bag.n_p = n_p;
  bag.n_g = n_g;
  bag.d = cfg.d_model;
  bag.t = 1;
  bag.c = 0;
  std::normal_distribution<double> dist(0.0, 1.0);
  bag.x_p.resize(static_cast<size_t>(n_p) * cfg.d_model);
  bag.x_g.resize(static_cast<size_t>(n_g) * cfg.d_model);
  for (auto& v : bag.x_p) v = static_cast<float>(dist(rng));
  for (auto& v : bag.x_g) v = static_cast<float>(dist(rng));
  auto in = to_input<float>(bag, EvalMode::Full);

  auto measure = [&](AblationFlags ab) {
    FlopLedger ledger;
    {
      FlopScope scope(ledger);
      model.forward(in, ab);
    }
    return ledger.total();
  };
  std::vector<FlopsRow> rows;
  rows.push_back({"baseline_all_ablations", measure({true, true, true})});
  rows.push_back({"wo_atsa", measure({true, false, false})});
  rows.push_back({"wo_pree", measure({false, true, false})});
  rows.push_back({"wo_lmf", measure({false, false, true})});
  rows.push_back({"adamhf_full", measure({false, false, false})});
  if (!out_dir.empty()) {
    std::string csv = "variant,flops\n";
    for (const auto& r : rows) csv += r.variant + "," + std::to_string(r.flops) + "\n";
    write_text(out_dir + "/flops.csv", csv);
  }
  return rows;
}

std::vector<GradCheckReport> run_gradcheck(std::uint64_t seed) {
  RunConfig cfg;
  cfg.d_model = 8;
  cfg.t_bins = 4;
  cfg.k_min_patho = 2;
  cfg.k_max_patho = 4;
  cfg.k_min_geno = 2;
  cfg.k_max_geno = 4;
  cfg.seed = seed;
  auto model = AdaMhfModel<double>::assemble(cfg);

  SampleBag bag;
  bag.sample_id = "gc";
  bag.n_p = 6;
  bag.n_g = 6;
  bag.d = cfg.d_model;
  bag.t = 2;
  bag.c = 0;
  std::mt19937_64 rng(mix_seed(seed, 0x6c));
  std::normal_distribution<double> dist(0.0, 1.0);
  bag.x_p.resize(static_cast<size_t>(bag.n_p) * bag.d);
  bag.x_g.resize(static_cast<size_t>(bag.n_g) * bag.d);
  for (auto& v : bag.x_p) v = static_cast<float>(dist(rng));
  for (auto& v : bag.x_g) v = static_cast<float>(dist(rng));
  auto in = to_input<double>(bag, EvalMode::Full);

  // One recording pass pins every discrete routing decision; the loss closure
  // replays it so central differences stay on one branch.
  ForwardTrace trace;
  forward_loss(model, in, bag.t, bag.c, {}, &trace);
  auto loss_fn = [&]() {
    auto [loss, out] = forward_loss(model, in, bag.t, bag.c, {}, nullptr, &trace);
    return loss;
  };
  auto reports = grad_check(model.params, loss_fn, 1e-3, 1e-5);

  // The frozen residual MLPs must receive exactly zero gradient under a
  // normal backward pass.
  model.params.zero_grad();
  auto loss = loss_fn();
  loss.backward();
  double frozen_max = 0;
  for (auto& it : model.params.items()) {
    if (it.trainable) continue;
    for (double g : it.tensor.grad()) frozen_max = std::max(frozen_max, std::abs(g));
  }
  GradCheckReport frozen;
  frozen.parameter_name = "frozen.residual.zero_grad";
  frozen.max_relative_error = frozen_max;
  frozen.passed = frozen_max == 0.0;
  reports.push_back(frozen);
  return reports;
}

}  // namespace adamhf
