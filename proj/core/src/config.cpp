#include "adamhf/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace adamhf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

PlaceholderKind parse_placeholder(const std::string& v) {
  if (v == "cls") return PlaceholderKind::ClassToken;
  if (v == "zeros") return PlaceholderKind::Zeros;
  if (v == "mean") return PlaceholderKind::MeanToken;
  throw std::invalid_argument("config: placeholder must be cls|zeros|mean, got " + v);
}

}  // namespace

void RunConfig::validate() const {
  if (lambda < 0) throw std::invalid_argument("config: lambda must be >= 0");
  if (lr < 0) throw std::invalid_argument("config: lr must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (n_s < 1) throw std::invalid_argument("config: n_s must be >= 1");
  if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
  if (beta < 0 || beta > 1) throw std::invalid_argument("config: beta must be in [0,1]");
  if (t_bins < 2) throw std::invalid_argument("config: t_bins must be >= 2");
  if (d_model < 4 || d_model % 2 != 0)
    throw std::invalid_argument("config: d_model must be even and >= 4");
  if (rank_r < 1) throw std::invalid_argument("config: rank_r must be >= 1");
  if (pree_layers < 1 || pree_layers > 3)
    throw std::invalid_argument("config: pree_layers must be in [1,3]");
  if (k_min_patho < 2 || k_max_patho < k_min_patho)
    throw std::invalid_argument("config: bad pathology K bounds");
  if (k_min_geno < 2 || k_max_geno < k_min_geno)
    throw std::invalid_argument("config: bad genomic K bounds");
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    try {
      if (key == "lambda") base.lambda = std::stod(val);
      else if (key == "lr") base.lr = std::stod(val);
      else if (key == "batch_size") base.batch_size = std::stoi(val);
      else if (key == "n_s") base.n_s = std::stoi(val);
      else if (key == "epochs") base.epochs = std::stoi(val);
      else if (key == "beta") base.beta = std::stod(val);
      else if (key == "t_bins") base.t_bins = std::stoi(val);
      else if (key == "d_model") base.d_model = std::stoi(val);
      else if (key == "rank_r") base.rank_r = std::stoi(val);
      else if (key == "pree_layers") base.pree_layers = std::stoi(val);
      else if (key == "k_min_patho") base.k_min_patho = std::stoi(val);
      else if (key == "k_max_patho") base.k_max_patho = std::stoi(val);
      else if (key == "k_min_geno") base.k_min_geno = std::stoi(val);
      else if (key == "k_max_geno") base.k_max_geno = std::stoi(val);
      else if (key == "seed") base.seed = std::stoull(val);
      else if (key == "frozen_seed") base.frozen_seed = std::stoull(val);
      else if (key == "dataset") base.dataset = val;
      else if (key == "out_dir") base.out_dir = val;
      else if (key == "placeholder") base.placeholder = parse_placeholder(val);
      else
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception&) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": bad value for '" + key + "'");
    }
  }
  base.validate();
  return base;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str(), base);
}

}  // namespace adamhf
