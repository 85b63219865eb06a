#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "adamhf/tensor.hpp"

namespace adamhf {

// Named parameter registry. Iteration order is registration order, which is
// deterministic for a fixed model configuration.
template <class S>
class ParamStore {
 public:
  struct Item {
    std::string name;
    Tensor<S> tensor;
    bool trainable;
  };

  Tensor<S> add(const std::string& name, Tensor<S> t, bool trainable = true) {
    t.set_requires_grad(trainable);
    items_.push_back({name, t, trainable});
    return t;
  }

  const std::vector<Item>& items() const { return items_; }
  std::vector<Item>& items() { return items_; }

  Tensor<S> find(const std::string& name) const {
    for (const auto& it : items_)
      if (it.name == name) return it.tensor;
    throw std::out_of_range("no parameter named " + name);
  }

  void zero_grad() {
    for (auto& it : items_)
      if (it.trainable) it.tensor.zero_grad();
  }

  size_t count_values() const {
    size_t n = 0;
    for (const auto& it : items_) n += it.tensor.size();
    return n;
  }

  // FNV-1a over raw parameter bytes; used by the frozen-parameter and
  // determinism contracts.
  std::uint64_t checksum(bool trainable_only = false) const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& it : items_) {
      if (trainable_only && !it.trainable) continue;
      for (S v : it.tensor.value()) {
        const auto* b = reinterpret_cast<const unsigned char*>(&v);
        for (size_t i = 0; i < sizeof(S); ++i) {
          h ^= b[i];
          h *= 1099511628211ull;
        }
      }
    }
    return h;
  }

 private:
  std::vector<Item> items_;
};

// Draws are made in double and cast, so float and double builds from the same
// seed hold identical values.
template <class S>
Tensor<S> randn_tensor(std::vector<int> shape, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<S> data(Tensor<S>::numel(shape));
  for (auto& v : data) v = static_cast<S>(dist(rng));
  return Tensor<S>::from(std::move(shape), std::move(data));
}

template <class S>
Tensor<S> xavier_tensor(std::vector<int> shape, std::mt19937_64& rng) {
  size_t fan_in = shape.size() >= 2 ? static_cast<size_t>(shape[0]) : shape[0];
  size_t fan_out = shape.size() >= 2 ? static_cast<size_t>(shape.back()) : shape[0];
  if (shape.size() == 3) fan_in = static_cast<size_t>(shape[0]) * shape[1];
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  return randn_tensor<S>(std::move(shape), rng, std);
}

// A dense layer y = xW + b applied to token rows.
template <class S>
struct Linear {
  Tensor<S> w;  // [in×out]
  Tensor<S> b;  // [out]

  static Linear init(ParamStore<S>& ps, const std::string& name, int in, int out,
                     std::mt19937_64& rng, bool trainable = true) {
    Linear l;
    l.w = ps.add(name + ".w", xavier_tensor<S>({in, out}, rng), trainable);
    l.b = ps.add(name + ".b", Tensor<S>::zeros({out}), trainable);
    return l;
  }

  Tensor<S> operator()(const Tensor<S>& x) const {
    if (x.rank() == 1) return row(add_rowwise(matmul(as_row(x), w), b), 0);
    return add_rowwise(matmul(x, w), b);
  }
};

// Two dense layers with a ReLU between them.
template <class S>
struct Mlp2 {
  Linear<S> l1, l2;

  static Mlp2 init(ParamStore<S>& ps, const std::string& name, int in, int hidden, int out,
                   std::mt19937_64& rng, bool trainable = true) {
    Mlp2 m;
    m.l1 = Linear<S>::init(ps, name + ".l1", in, hidden, rng, trainable);
    m.l2 = Linear<S>::init(ps, name + ".l2", hidden, out, rng, trainable);
    return m;
  }

  Tensor<S> operator()(const Tensor<S>& x) const { return l2(relu(l1(x))); }
};

}  // namespace adamhf
