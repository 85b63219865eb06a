#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace adamhf {

// One patient record: a pathology token bag, six genomic group tokens, a
// discrete event/censor bin t in [1, t_bins], and censor flag c (1 = censored).
struct SampleBag {
  std::string sample_id;
  std::vector<float> x_p;  // row-major [n_p × d]
  std::vector<float> x_g;  // row-major [n_g × d]
  int n_p = 0;
  int n_g = 0;
  int d = 0;
  int t = 0;
  int c = 0;
};

struct DatasetMeta {
  int d = 0;
  int t_bins = 0;
  int n_samples = 0;
  std::uint64_t seed = 0;
};

struct ManifestRow {
  std::string sample_id;
  std::string patho_path;  // relative to the manifest directory
  std::string geno_path;
  int t = 0;
  int c = 0;
};

struct Manifest {
  DatasetMeta meta;
  std::vector<ManifestRow> rows;
  std::string dir;  // directory holding manifest.csv and the sample files
};

struct FoldSplit {
  int fold_index = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> valid_ids;
};

struct GenOptions {
  int n_samples = 200;
  int d = 16;
  int n_p_min = 64;
  int n_p_max = 256;
  int t_bins = 4;
  double noise = 0.25;
  std::uint64_t seed = 0;
  double censor_prob = 0.3;
  double signal_strength = 1.0;
  double patho_signal_fraction = 0.2;  // fraction of pathology tokens carrying signal
};

struct GenResult {
  Manifest manifest;
  std::vector<double> latent_risk;  // per sample, generation order
};

// Thrown by the tensor-file reader with the byte offset of the defect.
struct TensorFormatError : std::runtime_error {
  long long offset;
  TensorFormatError(const std::string& what, long long off);
};

// "AMHF" magic, version byte 0x01, u32-LE ndim, u32-LE dims, f32-LE payload.
void write_tensor_file(const std::string& path, const std::vector<int>& shape,
                       const std::vector<float>& data);
std::pair<std::vector<int>, std::vector<float>> read_tensor_file(const std::string& path);

// Hazard planted by the generator for latent risk z at bin k (1-based).
double planted_hazard(double z, int k);

GenResult generate_synthetic(const GenOptions& opts, const std::string& out_dir);

Manifest load_manifest(const std::string& dir);
SampleBag load_sample(const Manifest& manifest, const ManifestRow& row);

std::vector<FoldSplit> make_folds(const Manifest& manifest, int k, std::uint64_t seed);

// Uniform subsample of token rows without replacement, original order kept.
// n_p <= n_keep returns the input unchanged.
void subsample_patches(std::vector<float>& x_p, int& n_p, int d, int n_keep,
                       std::uint64_t seed);

}  // namespace adamhf
