#include "adamhf/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace adamhf {

TensorFormatError::TensorFormatError(const std::string& what, long long off)
    : std::runtime_error(what + " (byte offset " + std::to_string(off) + ")"), offset(off) {}

namespace {

constexpr char kMagic[4] = {'A', 'M', 'H', 'F'};
constexpr unsigned char kVersion = 0x01;
constexpr std::uint32_t kMaxDim = 1u << 28;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, long long off) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw TensorFormatError("truncated file", off);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_tensor_file(const std::string& path, const std::vector<int>& shape,
                       const std::vector<float>& data) {
  if (shape.size() > 3)
    throw std::invalid_argument("tensor file rank must be <= 3, got " +
                                std::to_string(shape.size()));
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor file dims must be positive");
    n *= static_cast<std::size_t>(d);
  }
  if (n != data.size()) throw std::invalid_argument("tensor file data/shape mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os.write(kMagic, 4);
  os.put(static_cast<char>(kVersion));
  put_u32(os, static_cast<std::uint32_t>(shape.size()));
  for (int d : shape) put_u32(os, static_cast<std::uint32_t>(d));
  static_assert(sizeof(float) == 4);
  os.write(reinterpret_cast<const char*>(data.data()),
           static_cast<std::streamsize>(data.size() * 4));
  if (!os) throw std::runtime_error("write failed: " + path);
}

std::pair<std::vector<int>, std::vector<float>> read_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for read: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is) throw TensorFormatError("truncated file", 0);
  for (int i = 0; i < 4; ++i)
    if (magic[i] != kMagic[i]) throw TensorFormatError("bad magic", i);
  const int version = is.get();
  if (version == std::char_traits<char>::eof()) throw TensorFormatError("truncated file", 4);
  if (version != kVersion) throw TensorFormatError("unsupported version", 4);
  const std::uint32_t ndim = get_u32(is, 5);
  if (ndim == 0 || ndim > 3) throw TensorFormatError("bad rank", 5);
  std::vector<int> shape(ndim);
  std::size_t n = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    const long long off = 9 + 4ll * i;
    const std::uint32_t d = get_u32(is, off);
    if (d == 0 || d > kMaxDim) throw TensorFormatError("dim overflow", off);
    shape[i] = static_cast<int>(d);
    n *= d;
    if (n > kMaxDim) throw TensorFormatError("dim overflow", off);
  }
  std::vector<float> data(n);
  const long long payload_off = 9 + 4ll * ndim;
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * 4));
  if (static_cast<std::size_t>(is.gcount()) != n * 4)
    throw TensorFormatError("truncated payload", payload_off + is.gcount());
  return {std::move(shape), std::move(data)};
}

double planted_hazard(double z, int k) {
  return 1.0 / (1.0 + std::exp(-(2.5 * z + 0.9 * (k - 1) - 1.0)));
}

GenResult generate_synthetic(const GenOptions& opts, const std::string& out_dir) {
  if (opts.n_samples < 10) throw std::invalid_argument("n_samples must be >= 10");
  if (opts.d < 4) throw std::invalid_argument("d must be >= 4");
  if (opts.t_bins < 2) throw std::invalid_argument("t_bins must be >= 2");
  if (opts.n_p_min < 1 || opts.n_p_max < opts.n_p_min)
    throw std::invalid_argument("invalid n_p range");

  fs::create_directories(out_dir);
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int d = opts.d;
  const int n_groups = 6;

  // Unit signal directions, one for pathology, one per signal-carrying
  // genomic group (groups 0 and 1 carry signal, the rest are noise).
  auto unit_vec = [&] {
    std::vector<double> u(d);
    double norm = 0;
    for (auto& v : u) {
      v = gauss(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : u) v /= norm;
    return u;
  };
  const auto u_p = unit_vec();
  const std::vector<std::vector<double>> u_g = {unit_vec(), unit_vec()};

  GenResult result;
  result.manifest.meta = {d, opts.t_bins, opts.n_samples, opts.seed};
  result.manifest.dir = out_dir;

  // Administrative censoring (no event by the horizon) already contributes to
  // the censored fraction. Calibrate the random right-censoring rate so the
  // overall fraction lands on censor_prob: estimate the administrative share
  // by fixed-seed Monte Carlo over the latent risk, then solve
  // admin + (1 - admin) * p_random = censor_prob.
  double admin_share = 0;
  {
    std::mt19937_64 mc(12345);
    std::normal_distribution<double> mc_gauss(0.0, 1.0);
    const int mc_n = 20000;
    for (int i = 0; i < mc_n; ++i) {
      const double zz = mc_gauss(mc);
      double surv = 1.0;
      for (int k = 1; k <= opts.t_bins; ++k) surv *= 1.0 - planted_hazard(zz, k);
      admin_share += surv;
    }
    admin_share /= mc_n;
  }
  const double p_random =
      admin_share < 1.0
          ? std::clamp((opts.censor_prob - admin_share) / (1.0 - admin_share), 0.0, 1.0)
          : 0.0;

  for (int si = 0; si < opts.n_samples; ++si) {
    const double z = gauss(rng);
    result.latent_risk.push_back(z);

    SampleBag bag;
    {
      std::ostringstream id;
      id << "s" << si;
      bag.sample_id = id.str();
    }
    bag.d = d;
    bag.n_g = n_groups;
    bag.n_p = opts.n_p_min +
              static_cast<int>(rng() % static_cast<std::uint64_t>(opts.n_p_max - opts.n_p_min + 1));

    bag.x_p.resize(static_cast<std::size_t>(bag.n_p) * d);
    for (int i = 0; i < bag.n_p; ++i) {
      const bool carries = unif(rng) < opts.patho_signal_fraction;
      for (int j = 0; j < d; ++j) {
        double v = opts.noise * gauss(rng);
        if (carries) v += opts.signal_strength * z * u_p[j];
        bag.x_p[static_cast<std::size_t>(i) * d + j] = static_cast<float>(v);
      }
    }
    bag.x_g.resize(static_cast<std::size_t>(n_groups) * d);
    for (int g = 0; g < n_groups; ++g) {
      for (int j = 0; j < d; ++j) {
        double v = opts.noise * gauss(rng);
        if (g < 2) v += opts.signal_strength * z * u_g[g][j];
        bag.x_g[static_cast<std::size_t>(g) * d + j] = static_cast<float>(v);
      }
    }

    // Event bin from the planted discrete hazard, administrative censoring at
    // the horizon, then random right-censoring below the event bin.
    int t = opts.t_bins, c = 1;
    for (int k = 1; k <= opts.t_bins; ++k) {
      if (unif(rng) < planted_hazard(z, k)) {
        t = k;
        c = 0;
        break;
      }
    }
    if (c == 0 && unif(rng) < p_random) {
      const int upper = std::max(1, t - 1);
      t = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(upper));
      c = 1;
    }
    bag.t = t;
    bag.c = c;

    const std::string ppath = bag.sample_id + "_p.amhf";
    const std::string gpath = bag.sample_id + "_g.amhf";
    write_tensor_file((fs::path(out_dir) / ppath).string(), {bag.n_p, d}, bag.x_p);
    write_tensor_file((fs::path(out_dir) / gpath).string(), {bag.n_g, d}, bag.x_g);
    result.manifest.rows.push_back({bag.sample_id, ppath, gpath, bag.t, bag.c});
  }

  // Manifest and sidecar metadata.
  {
    std::ofstream os(fs::path(out_dir) / "manifest.csv");
    os << "sample_id,patho_path,geno_path,t,c\n";
    for (const auto& r : result.manifest.rows)
      os << r.sample_id << "," << r.patho_path << "," << r.geno_path << "," << r.t << ","
         << r.c << "\n";
  }
  {
    std::ofstream os(fs::path(out_dir) / "dataset.meta");
    os << "d=" << d << "\n"
       << "t_bins=" << opts.t_bins << "\n"
       << "seed=" << opts.seed << "\n"
       << "n_samples=" << opts.n_samples << "\n";
  }
  return result;
}

Manifest load_manifest(const std::string& dir) {
  Manifest m;
  m.dir = dir;
  {
    std::ifstream is(fs::path(dir) / "dataset.meta");
    if (!is) throw std::runtime_error("missing dataset.meta in " + dir);
    std::string line;
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, eq);
      const std::string val = line.substr(eq + 1);
      if (key == "d") m.meta.d = std::stoi(val);
      else if (key == "t_bins") m.meta.t_bins = std::stoi(val);
      else if (key == "seed") m.meta.seed = std::stoull(val);
      else if (key == "n_samples") m.meta.n_samples = std::stoi(val);
    }
  }
  std::ifstream is(fs::path(dir) / "manifest.csv");
  if (!is) throw std::runtime_error("missing manifest.csv in " + dir);
  std::string line;
  std::getline(is, line);  // header
  if (line != "sample_id,patho_path,geno_path,t,c")
    throw std::runtime_error("bad manifest header: " + line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    ManifestRow r;
    std::string t, c;
    std::getline(ss, r.sample_id, ',');
    std::getline(ss, r.patho_path, ',');
    std::getline(ss, r.geno_path, ',');
    std::getline(ss, t, ',');
    std::getline(ss, c, ',');
    r.t = std::stoi(t);
    r.c = std::stoi(c);
    m.rows.push_back(std::move(r));
  }
  return m;
}

SampleBag load_sample(const Manifest& manifest, const ManifestRow& row) {
  SampleBag bag;
  bag.sample_id = row.sample_id;
  bag.t = row.t;
  bag.c = row.c;
  auto [pshape, pdata] = read_tensor_file((fs::path(manifest.dir) / row.patho_path).string());
  auto [gshape, gdata] = read_tensor_file((fs::path(manifest.dir) / row.geno_path).string());
  if (pshape.size() != 2 || gshape.size() != 2 || pshape[1] != gshape[1])
    throw std::runtime_error("inconsistent sample shapes for " + row.sample_id);
  bag.n_p = pshape[0];
  bag.n_g = gshape[0];
  bag.d = pshape[1];
  bag.x_p = std::move(pdata);
  bag.x_g = std::move(gdata);
  return bag;
}

std::vector<FoldSplit> make_folds(const Manifest& manifest, int k, std::uint64_t seed) {
  const int n = static_cast<int>(manifest.rows.size());
  if (k <= 0 || k > n)
    throw std::invalid_argument("make_folds: k=" + std::to_string(k) + " with n=" +
                                std::to_string(n));
  std::vector<std::string> ids;
  ids.reserve(n);
  for (const auto& r : manifest.rows) ids.push_back(r.sample_id);
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  std::vector<FoldSplit> folds(k);
  for (int f = 0; f < k; ++f) {
    const int lo = static_cast<int>((static_cast<long long>(f) * n + k - 1) / k);
    const int hi = f + 1 == k ? n : static_cast<int>((static_cast<long long>(f + 1) * n + k - 1) / k);
    folds[f].fold_index = f;
    for (int i = 0; i < n; ++i) {
      if (i >= lo && i < hi) folds[f].valid_ids.push_back(ids[i]);
      else folds[f].train_ids.push_back(ids[i]);
    }
  }
  return folds;
}

void subsample_patches(std::vector<float>& x_p, int& n_p, int d, int n_keep,
                       std::uint64_t seed) {
  if (n_keep < 1) throw std::invalid_argument("subsample_patches: n_keep must be >= 1");
  if (n_p <= n_keep) return;
  std::vector<int> idx(n_p);
  for (int i = 0; i < n_p; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < n_keep; ++i) {
    const int j = i + static_cast<int>(rng() % static_cast<std::uint64_t>(n_p - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n_keep);
  std::sort(idx.begin(), idx.end());
  std::vector<float> out(static_cast<std::size_t>(n_keep) * d);
  for (int r = 0; r < n_keep; ++r)
    std::copy_n(x_p.begin() + static_cast<std::size_t>(idx[r]) * d, d,
                out.begin() + static_cast<std::size_t>(r) * d);
  x_p = std::move(out);
  n_p = n_keep;
}

}  // namespace adamhf
