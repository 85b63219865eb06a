#pragma once

#include <cstdint>
#include <string>

namespace adamhf {

enum class PlaceholderKind { ClassToken, Zeros, MeanToken };

// All run-level knobs. Every key has a default; unknown keys in a config file
// are an error.
struct RunConfig {
  double lambda = 0.1;
  double lr = 0.001;
  int batch_size = 1;
  int n_s = 2048;
  int epochs = 20;
  double beta = 0.2;
  int t_bins = 4;
  int d_model = 16;
  int rank_r = 4;
  int pree_layers = 3;
  int k_min_patho = 8;
  int k_max_patho = 256;
  int k_min_geno = 2;
  int k_max_geno = 6;
  std::uint64_t seed = 0;
  std::uint64_t frozen_seed = 1234;  // init stream for the frozen residual MLPs
  std::string dataset;
  std::string out_dir = "out";
  PlaceholderKind placeholder = PlaceholderKind::ClassToken;

  void validate() const;
};

// UTF-8 `key=value` lines, '#' comments. Keys missing from the file keep the
// defaults in `base`; an unrecognized key throws.
RunConfig parse_config_text(const std::string& text, RunConfig base = {});
RunConfig load_config_file(const std::string& path, RunConfig base = {});

}  // namespace adamhf
