// Command-line front end: data generation, training, evaluation, the
// missing-modality benchmark, flop accounting and the gradient check.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adamhf/config.hpp"
#include "adamhf/dataio.hpp"
#include "adamhf/runner.hpp"

using namespace adamhf;

namespace {

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value config file");
  cmd->add_option("--seed", args.seed, "override the config seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_option("--out", args.out_dir, "output directory");
}

RunConfig make_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) cfg = load_config_file(args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  cfg.validate();
  return cfg;
}

void print_fold_table(const std::vector<FoldReport>& reports) {
  std::printf("%-6s %-10s %-16s %-14s %-12s %-10s\n", "fold", "status", "c_index_harrell",
              "c_index_paper", "logrank_p", "flops");
  for (const auto& r : reports) {
    if (r.aborted) {
      std::printf("%-6d aborted    (%s)\n", r.fold_index, r.abort_reason.c_str());
      continue;
    }
    std::printf("%-6d ok         %-16.4f %-14.4f %-12.4f %-10llu\n", r.fold_index,
                r.c_index_harrell, r.c_index_paper, r.logrank_p,
                static_cast<unsigned long long>(r.forward_flops));
  }
  std::vector<double> ch;
  for (const auto& r : reports)
    if (!r.aborted && r.c_index_harrell_defined) ch.push_back(r.c_index_harrell);
  auto [m, s] = mean_std(ch);
  std::printf("mean c_index_harrell %.4f +/- %.4f\n", m, s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AdaMHF: adaptive multimodal hierarchical fusion for survival prediction"};
  app.require_subcommand(1);

  // gen-data
  CommonArgs gen_args;
  GenOptions gen_opts;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic two-modality dataset");
  add_common(gen, gen_args);
  gen->add_option("--n-samples", gen_opts.n_samples, "number of samples");
  gen->add_option("--d", gen_opts.d, "feature dimension");
  gen->add_option("--t-bins", gen_opts.t_bins, "number of discrete time bins");
  gen->add_option("--noise", gen_opts.noise, "feature noise level");
  gen->add_option("--censor-prob", gen_opts.censor_prob, "random censoring probability");

  CommonArgs train_args, eval_args, bench_args, flops_args, gc_args;
  auto* train = app.add_subcommand("train", "train the 5-fold harness");
  add_common(train, train_args);

  std::string eval_mode_str = "full";
  std::string model_dir;
  auto* eval = app.add_subcommand("eval", "evaluate trained folds in one modality mode");
  add_common(eval, eval_args);
  eval->add_option("--mode", eval_mode_str, "full | geno_missing | patho_missing");
  eval->add_option("--model-dir", model_dir, "directory with fold_<i>/model.bin");

  std::string bench_model_dir;
  auto* bench = app.add_subcommand("bench-missing", "missing-modality benchmark");
  add_common(bench, bench_args);
  bench->add_option("--model-dir", bench_model_dir, "directory with fold_<i>/model.bin");

  int flops_np = 0;
  auto* flops = app.add_subcommand("flops", "forward-pass flop ablation report");
  add_common(flops, flops_args);
  flops->add_option("--n-p", flops_np, "pathology token count for the probe sample");

  auto* gc = app.add_subcommand("gradcheck", "full-model 64-bit gradient check");
  add_common(gc, gc_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      gen_opts.seed = gen_args.seed;
      const std::string out = gen_args.out_dir.empty() ? "dataset" : gen_args.out_dir;
      auto res = generate_synthetic(gen_opts, out);
      std::printf("wrote %zu samples to %s\n", res.manifest.rows.size(), out.c_str());
    } else if (train->parsed()) {
      auto cfg = make_config(train_args);
      auto reports = run_train(cfg, cfg.out_dir);
      print_fold_table(reports);
    } else if (eval->parsed()) {
      auto cfg = make_config(eval_args);
      EvalMode mode;
      if (eval_mode_str == "full") mode = EvalMode::Full;
      else if (eval_mode_str == "geno_missing") mode = EvalMode::GenoMissing;
      else if (eval_mode_str == "patho_missing") mode = EvalMode::PathoMissing;
      else throw std::invalid_argument("unknown mode " + eval_mode_str);
      auto reports = run_eval(cfg, mode, model_dir.empty() ? cfg.out_dir : model_dir);
      print_fold_table(reports);
    } else if (bench->parsed()) {
      auto cfg = make_config(bench_args);
      auto table = run_bench_missing(
          cfg, bench_model_dir.empty() ? cfg.out_dir : bench_model_dir, cfg.out_dir);
      std::printf("%-16s %-10s %-10s\n", "mode", "mean", "std");
      for (const auto& mr : table)
        std::printf("%-16s %-10.4f %-10.4f\n", eval_mode_name(mr.mode), mr.mean, mr.stddev);
    } else if (flops->parsed()) {
      auto cfg = make_config(flops_args);
      auto rows = run_flops(cfg, cfg.out_dir, flops_np);
      std::printf("%-24s %s\n", "variant", "flops");
      for (const auto& r : rows)
        std::printf("%-24s %llu\n", r.variant.c_str(),
                    static_cast<unsigned long long>(r.flops));
    } else if (gc->parsed()) {
      auto reports = run_gradcheck(gc_args.seed);
      bool all_ok = true;
      double worst = 0;
      for (const auto& r : reports) {
        all_ok = all_ok && r.passed;
        worst = std::max(worst, r.max_relative_error);
        if (!r.passed)
          std::printf("FAIL %-40s max_rel_err %.3e\n", r.parameter_name.c_str(),
                      r.max_relative_error);
      }
      std::printf("gradcheck %s: %zu blocks, worst relative error %.3e\n",
                  all_ok ? "passed" : "FAILED", reports.size(), worst);
      return all_ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
