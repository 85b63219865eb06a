#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adamhf/config.hpp"
#include "adamhf/dataio.hpp"
#include "adamhf/gradcheck.hpp"
#include "adamhf/model.hpp"
#include "adamhf/survival.hpp"

namespace adamhf {

struct EpochStat {
  int epoch = 0;
  double train_loss = 0;
  double valid_loss = 0;
  double c_index_harrell = 0;  // NaN when undefined
  double c_index_paper = 0;
  double logrank_chi = 0;
  double logrank_p = 1;
};

struct FoldReport {
  int fold_index = 0;
  bool aborted = false;
  std::string abort_reason;
  std::vector<EpochStat> epochs;
  double c_index_harrell = 0;  // final-epoch validation metrics
  bool c_index_harrell_defined = false;
  double c_index_paper = 0;
  double logrank_chi = 0;
  double logrank_p = 1;
  bool logrank_defined = false;
  std::uint64_t forward_flops = 0;  // one full-mode validation forward
  std::vector<PredRecord> valid_preds;
};

struct ModeReport {
  EvalMode mode = EvalMode::Full;
  std::vector<double> per_fold;  // c_index_harrell, NaN when undefined
  double mean = 0;
  double stddev = 0;
};

struct FlopsRow {
  std::string variant;
  std::uint64_t flops = 0;
};

// In-memory dataset: every sample preloaded, tokens already subsampled to n_s.
struct LoadedDataset {
  Manifest manifest;
  std::vector<SampleBag> samples;  // manifest row order
};

LoadedDataset load_dataset(const RunConfig& cfg);

template <class S>
ModelInput<S> to_input(const SampleBag& bag, EvalMode mode);

// Trains all folds; when out_dir is non-empty writes fold_<i>/metrics.csv,
// fold_<i>/km.csv, fold_<i>/model.bin, summary.csv and routing_trace.csv.
std::vector<FoldReport> run_train(const RunConfig& cfg, const std::string& out_dir);

// Evaluates saved fold models (training them first if absent) in one mode.
std::vector<FoldReport> run_eval(const RunConfig& cfg, EvalMode mode,
                                 const std::string& model_dir);

// 3 modes x 5 folds + 3 summary rows; writes summary.csv under out_dir.
std::vector<ModeReport> run_bench_missing(const RunConfig& cfg, const std::string& model_dir,
                                          const std::string& out_dir);

// One fixed random sample through every ablation variant; writes flops.csv.
std::vector<FlopsRow> run_flops(const RunConfig& cfg, const std::string& out_dir,
                                int n_p_override = 0);

// Full-model 64-bit gradient check at tiny dims; returns per-block reports.
std::vector<GradCheckReport> run_gradcheck(std::uint64_t seed);

// Parameter persistence (name-checked against the current model layout).
void save_params(const ParamStore<float>& ps, const std::string& path);
void load_params(ParamStore<float>& ps, const std::string& path);

// Mean/stddev of the defined entries; NaN mean when none are defined.
std::pair<double, double> mean_std(const std::vector<double>& xs);

}  // namespace adamhf
