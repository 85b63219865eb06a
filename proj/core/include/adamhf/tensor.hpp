#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "adamhf/flops.hpp"

namespace adamhf {

// SELU constants (Klambauer et al.), fixed-point of the self-normalizing map.
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
inline constexpr double kSeluLambda = 1.0507009873554804934193349852946;

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

namespace detail {
inline std::uint64_t next_seq() {
  thread_local std::uint64_t c = 0;
  return ++c;
}
}  // namespace detail

template <class S>
struct Node {
  std::vector<int> shape;
  std::vector<S> val;
  std::vector<S> grad;  // sized lazily, same length as val
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  std::vector<S>& g() {
    if (grad.size() != val.size()) grad.assign(val.size(), S(0));
    return grad;
  }
};

// Value-semantics handle to a graph node. Tensors are written once by the op
// that produces them; the parent list keeps the upstream graph alive until
// backward() has run.
template <class S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    return filled(std::move(shape), S(0), requires_grad);
  }
  static Tensor filled(std::vector<int> shape, S v, bool requires_grad = false) {
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(shape);
    n->val.assign(numel(n->shape), v);
    n->requires_grad = requires_grad;
    n->seq = detail::next_seq();
    return Tensor(std::move(n));
  }
  static Tensor from(std::vector<int> shape, std::vector<S> data,
                     bool requires_grad = false) {
    if (numel(shape) != data.size())
      throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(shape);
    n->val = std::move(data);
    n->requires_grad = requires_grad;
    n->seq = detail::next_seq();
    return Tensor(std::move(n));
  }
  static Tensor scalar(S v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  static size_t numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("non-positive dimension in " + shape_str(shape));
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  bool defined() const { return static_cast<bool>(n_); }
  const std::vector<int>& shape() const { return n_->shape; }
  int dim(int i) const { return n_->shape.at(i); }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  size_t size() const { return n_->val.size(); }
  const std::vector<S>& value() const { return n_->val; }
  std::vector<S>& mut_value() { return n_->val; }
  S item() const {
    if (size() != 1) throw std::logic_error("item() on non-scalar tensor " + shape_str(shape()));
    return n_->val[0];
  }
  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool b) { n_->requires_grad = b; }
  const std::vector<S>& grad() const {
    return const_cast<Node<S>*>(n_.get())->g();
  }
  void zero_grad() { n_->grad.assign(n_->val.size(), S(0)); }

  Node<S>* node() const { return n_.get(); }
  const std::shared_ptr<Node<S>>& ptr() const { return n_; }

  // Reverse-mode accumulation from a scalar root. Grads of leaves accumulate;
  // call zero_grad between steps.
  void backward() const {
    if (size() != 1)
      throw std::logic_error("backward() requires a scalar loss, got " + shape_str(shape()));
    if (!n_->requires_grad) return;
    std::vector<Node<S>*> order;
    std::unordered_set<Node<S>*> seen;
    std::vector<Node<S>*> stack{n_.get()};
    seen.insert(n_.get());
    while (!stack.empty()) {
      Node<S>* cur = stack.back();
      stack.pop_back();
      order.push_back(cur);
      for (auto& p : cur->parents)
        if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
    std::sort(order.begin(), order.end(),
              [](Node<S>* a, Node<S>* b) { return a->seq > b->seq; });
    n_->g()[0] += S(1);
    for (Node<S>* nd : order) {
      nd->g();
      if (nd->backprop) nd->backprop(*nd);
    }
  }

  explicit Tensor(std::shared_ptr<Node<S>> n) : n_(std::move(n)) {}

 private:
  std::shared_ptr<Node<S>> n_;
};

namespace detail {

template <class S>
Tensor<S> make_result(std::vector<int> shape, std::vector<S> val,
                      std::vector<Tensor<S>> parents,
                      std::function<void(Node<S>&)> backprop) {
  auto n = std::make_shared<Node<S>>();
  n->shape = std::move(shape);
  n->val = std::move(val);
  n->seq = next_seq();
  bool rg = false;
  for (auto& p : parents) {
    rg = rg || p.requires_grad();
    n->parents.push_back(p.ptr());
  }
  n->requires_grad = rg;
  if (rg) n->backprop = std::move(backprop);
  return Tensor<S>(std::move(n));
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

template <class S, class F, class DF>
Tensor<S> unary_op(const Tensor<S>& x, F f, DF df) {
  std::vector<S> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(x.value()[i]);
  return detail::make_result<S>(
      x.shape(), std::move(out), {x}, [df](Node<S>& self) {
        Node<S>& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& pg = p.g();
        for (size_t i = 0; i < self.val.size(); ++i)
          pg[i] += self.grad[i] * df(p.val[i], self.val[i]);
      });
}

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
  record_flops("activation", x.size());
  return unary_op(x, [](S v) { return v > S(0) ? v : S(0); },
                  [](S v, S) { return v > S(0) ? S(1) : S(0); });
}

template <class S>
Tensor<S> selu(const Tensor<S>& x) {
  record_flops("activation", x.size());
  const S a = S(kSeluAlpha), l = S(kSeluLambda);
  return unary_op(
      x, [a, l](S v) { return v > S(0) ? l * v : l * a * (std::exp(v) - S(1)); },
      [a, l](S v, S) { return v > S(0) ? l : l * a * std::exp(v); });
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  record_flops("activation", x.size());
  return unary_op(x, [](S v) { return S(1) / (S(1) + std::exp(-v)); },
                  [](S, S y) { return y * (S(1) - y); });
}

template <class S>
Tensor<S> abs_op(const Tensor<S>& x) {
  return unary_op(x, [](S v) { return std::abs(v); },
                  [](S v, S) { return v > S(0) ? S(1) : (v < S(0) ? S(-1) : S(0)); });
}

template <class S>
Tensor<S> log_op(const Tensor<S>& x) {
  return unary_op(x, [](S v) { return std::log(v); }, [](S v, S) { return S(1) / v; });
}

// y = a*x + b, elementwise.
template <class S>
Tensor<S> affine(const Tensor<S>& x, S a, S b) {
  record_flops("elementwise", x.size());
  return unary_op(x, [a, b](S v) { return a * v + b; }, [a](S, S) { return a; });
}

template <class S>
Tensor<S> clamp(const Tensor<S>& x, S lo, S hi) {
  return unary_op(x, [lo, hi](S v) { return std::min(hi, std::max(lo, v)); },
                  [lo, hi](S v, S) { return (v > lo && v < hi) ? S(1) : S(0); });
}

template <class S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <class S, class F, class DA, class DB>
Tensor<S> binary_op(const Tensor<S>& a, const Tensor<S>& b, F f, DA da, DB db) {
  std::vector<S> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(a.value()[i], b.value()[i]);
  return detail::make_result<S>(
      a.shape(), std::move(out), {a, b}, [da, db](Node<S>& self) {
        Node<S>& pa = *self.parents[0];
        Node<S>& pb = *self.parents[1];
        if (pa.requires_grad) {
          auto& g = pa.g();
          for (size_t i = 0; i < self.val.size(); ++i)
            g[i] += self.grad[i] * da(pa.val[i], pb.val[i]);
        }
        if (pb.requires_grad) {
          auto& g = pb.g();
          for (size_t i = 0; i < self.val.size(); ++i)
            g[i] += self.grad[i] * db(pa.val[i], pb.val[i]);
        }
      });
}

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "add");
  record_flops("elementwise", a.size());
  return binary_op(a, b, [](S x, S y) { return x + y; }, [](S, S) { return S(1); },
                   [](S, S) { return S(1); });
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "sub");
  record_flops("elementwise", a.size());
  return binary_op(a, b, [](S x, S y) { return x - y; }, [](S, S) { return S(1); },
                   [](S, S) { return S(-1); });
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "mul");
  record_flops("elementwise", 2 * a.size());
  return binary_op(a, b, [](S x, S y) { return x * y; }, [](S, S y) { return y; },
                   [](S x, S) { return x; });
}

template <class S>
Tensor<S> scale(const Tensor<S>& x, S c) {
  record_flops("elementwise", x.size());
  return unary_op(x, [c](S v) { return c * v; }, [c](S, S) { return c; });
}

// ---- linear algebra --------------------------------------------------------

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  record_flops("matmul", 2ull * m * k * n);
  std::vector<S> out(static_cast<size_t>(m) * n, S(0));
  const auto& av = a.value();
  const auto& bv = b.value();
  for (int i = 0; i < m; ++i)
    for (int kk = 0; kk < k; ++kk) {
      const S aik = av[i * k + kk];
      if (aik == S(0)) continue;
      for (int j = 0; j < n; ++j) out[i * n + j] += aik * bv[kk * n + j];
    }
  return detail::make_result<S>(
      {m, n}, std::move(out), {a, b}, [m, k, n](Node<S>& self) {
        Node<S>& pa = *self.parents[0];
        Node<S>& pb = *self.parents[1];
        const auto& g = self.grad;
        if (pa.requires_grad) {  // dA = dC Bᵀ
          auto& ga = pa.g();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
              const S gij = g[i * n + j];
              if (gij == S(0)) continue;
              for (int kk = 0; kk < k; ++kk) ga[i * k + kk] += gij * pb.val[kk * n + j];
            }
        }
        if (pb.requires_grad) {  // dB = Aᵀ dC
          auto& gb = pb.g();
          for (int i = 0; i < m; ++i)
            for (int kk = 0; kk < k; ++kk) {
              const S aik = pa.val[i * k + kk];
              if (aik == S(0)) continue;
              for (int j = 0; j < n; ++j) gb[kk * n + j] += aik * g[i * n + j];
            }
        }
      });
}

template <class S>
Tensor<S> transpose(const Tensor<S>& x) {
  if (x.rank() != 2)
    throw std::invalid_argument("transpose: expected rank-2, got " + shape_str(x.shape()));
  const int m = x.dim(0), n = x.dim(1);
  std::vector<S> out(x.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[j * m + i] = x.value()[i * n + j];
  return detail::make_result<S>(
      {n, m}, std::move(out), {x}, [m, n](Node<S>& self) {
        Node<S>& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.g();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
      });
}

template <class S>
Tensor<S> dot(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "dot");
  record_flops("matmul", 2ull * a.size());
  S acc = S(0);
  for (size_t i = 0; i < a.size(); ++i) acc += a.value()[i] * b.value()[i];
  return detail::make_result<S>(
      {1}, {acc}, {a, b}, [](Node<S>& self) {
        Node<S>& pa = *self.parents[0];
        Node<S>& pb = *self.parents[1];
        const S g = self.grad[0];
        if (pa.requires_grad) {
          auto& ga = pa.g();
          for (size_t i = 0; i < pa.val.size(); ++i) ga[i] += g * pb.val[i];
        }
        if (pb.requires_grad) {
          auto& gb = pb.g();
          for (size_t i = 0; i < pb.val.size(); ++i) gb[i] += g * pa.val[i];
        }
      });
}

// X[N×d] + b[d] broadcast over rows.
template <class S>
Tensor<S> add_rowwise(const Tensor<S>& x, const Tensor<S>& b) {
  if (x.rank() != 2 || b.rank() != 1 || x.dim(1) != b.dim(0))
    throw std::invalid_argument("add_rowwise: shape mismatch " + shape_str(x.shape()) +
                                " vs " + shape_str(b.shape()));
  const int n = x.dim(0), d = x.dim(1);
  record_flops("elementwise", x.size());
  std::vector<S> out(x.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out[i * d + j] = x.value()[i * d + j] + b.value()[j];
  return detail::make_result<S>(
      {n, d}, std::move(out), {x, b}, [n, d](Node<S>& self) {
        Node<S>& px = *self.parents[0];
        Node<S>& pb = *self.parents[1];
        if (px.requires_grad) {
          auto& g = px.g();
          for (size_t i = 0; i < self.val.size(); ++i) g[i] += self.grad[i];
        }
        if (pb.requires_grad) {
          auto& g = pb.g();
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) g[j] += self.grad[i * d + j];
        }
      });
}

// out[i,:] = X[i,:] * s[i]
template <class S>
Tensor<S> scale_rows(const Tensor<S>& x, const Tensor<S>& s) {
  if (x.rank() != 2 || s.rank() != 1 || x.dim(0) != s.dim(0))
    throw std::invalid_argument("scale_rows: shape mismatch " + shape_str(x.shape()) +
                                " vs " + shape_str(s.shape()));
  const int n = x.dim(0), d = x.dim(1);
  record_flops("elementwise", x.size());
  std::vector<S> out(x.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out[i * d + j] = x.value()[i * d + j] * s.value()[i];
  return detail::make_result<S>(
      {n, d}, std::move(out), {x, s}, [n, d](Node<S>& self) {
        Node<S>& px = *self.parents[0];
        Node<S>& ps = *self.parents[1];
        if (px.requires_grad) {
          auto& g = px.g();
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) g[i * d + j] += self.grad[i * d + j] * ps.val[i];
        }
        if (ps.requires_grad) {
          auto& g = ps.g();
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) g[i] += self.grad[i * d + j] * px.val[i * d + j];
        }
      });
}

// ---- reductions and reshaping ---------------------------------------------

template <class S>
Tensor<S> sum(const Tensor<S>& x) {
  S acc = std::accumulate(x.value().begin(), x.value().end(), S(0));
  return detail::make_result<S>(
      {1}, {acc}, {x}, [](Node<S>& self) {
        Node<S>& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.g();
        for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
      });
}

// Mean over rows of X[N×d] -> [d].
template <class S>
Tensor<S> mean_rows(const Tensor<S>& x) {
  if (x.rank() != 2)
    throw std::invalid_argument("mean_rows: expected rank-2, got " + shape_str(x.shape()));
  const int n = x.dim(0), d = x.dim(1);
  std::vector<S> out(d, S(0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out[j] += x.value()[i * d + j];
  for (int j = 0; j < d; ++j) out[j] /= S(n);
  return detail::make_result<S>(
      {d}, std::move(out), {x}, [n, d](Node<S>& self) {
        Node<S>& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.g();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) g[i * d + j] += self.grad[j] / S(n);
      });
}

template <class S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
  const int d = parts[0].rank() == 2 ? parts[0].dim(1) : parts[0].dim(0);
  int total = 0;
  std::vector<S> out;
  for (const auto& p : parts) {
    const int pd = p.rank() == 2 ? p.dim(1) : p.dim(0);
    if (pd != d)
      throw std::invalid_argument("concat_rows: width mismatch " + shape_str(p.shape()));
    total += p.rank() == 2 ? p.dim(0) : 1;
    out.insert(out.end(), p.value().begin(), p.value().end());
  }
  return detail::make_result<S>(
      {total, d}, std::move(out), parts, [](Node<S>& self) {
        size_t off = 0;
        for (auto& pp : self.parents) {
          if (pp->requires_grad) {
            auto& g = pp->g();
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[off + i];
          }
          off += pp->val.size();
        }
      });
}

// 1-D concatenation.
template <class S>
Tensor<S> concat_vec(const std::vector<Tensor<S>>& parts) {
  std::vector<S> out;
  for (const auto& p : parts) out.insert(out.end(), p.value().begin(), p.value().end());
  const int total = static_cast<int>(out.size());
  return detail::make_result<S>(
      {total}, std::move(out), parts, [](Node<S>& self) {
        size_t off = 0;
        for (auto& pp : self.parents) {
          if (pp->requires_grad) {
            auto& g = pp->g();
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[off + i];
          }
          off += pp->val.size();
        }
      });
}

template <class S>
Tensor<S> gather_rows(const Tensor<S>& x, std::vector<int> idx) {
  if (x.rank() != 2)
    throw std::invalid_argument("gather_rows: expected rank-2, got " + shape_str(x.shape()));
  const int n = x.dim(0), d = x.dim(1);
  for (int i : idx)
    if (i < 0 || i >= n)
      throw std::out_of_range("gather_rows: index " + std::to_string(i) + " out of " +
                              std::to_string(n));
  const int rows = static_cast<int>(idx.size());
  std::vector<S> out(idx.size() * static_cast<size_t>(d));
  for (size_t r = 0; r < idx.size(); ++r)
    for (int j = 0; j < d; ++j) out[r * d + j] = x.value()[idx[r] * d + j];
  return detail::make_result<S>(
      {rows, d}, std::move(out), {x},
      [idx = std::move(idx), d](Node<S>& self) {
        Node<S>& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.g();
        for (size_t r = 0; r < idx.size(); ++r)
          for (int j = 0; j < d; ++j) g[idx[r] * d + j] += self.grad[r * d + j];
      });
}

// Row i of X[N×d] as a 1-D tensor.
template <class S>
Tensor<S> row(const Tensor<S>& x, int i) {
  const int d = x.dim(1);
  std::vector<S> out(x.value().begin() + static_cast<size_t>(i) * d,
                     x.value().begin() + static_cast<size_t>(i + 1) * d);
  return detail::make_result<S>(
      {d}, std::move(out), {x}, [i, d](Node<S>& self) {
        Node<S>& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.g();
        for (int j = 0; j < d; ++j) g[i * d + j] += self.grad[j];
      });
}

// 1-D vector viewed as a single row [1×d].
template <class S>
Tensor<S> as_row(const Tensor<S>& x) {
  if (x.rank() != 1)
    throw std::invalid_argument("as_row: expected rank-1, got " + shape_str(x.shape()));
  const int d = x.dim(0);
  return detail::make_result<S>(
      {1, d}, std::vector<S>(x.value()), {x}, [](Node<S>& self) {
        Node<S>& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.g();
        for (size_t j = 0; j < g.size(); ++j) g[j] += self.grad[j];
      });
}

// 2-D [N×d] flattened to 1-D [N*d].
template <class S>
Tensor<S> flatten(const Tensor<S>& x) {
  return detail::make_result<S>(
      {static_cast<int>(x.size())}, std::vector<S>(x.value()), {x}, [](Node<S>& self) {
        Node<S>& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.g();
        for (size_t j = 0; j < g.size(); ++j) g[j] += self.grad[j];
      });
}

// Column-wise concatenation of [N×p] and [N×q] into [N×(p+q)].
template <class S>
Tensor<S> concat_cols(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw std::invalid_argument("concat_cols: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  const int n = a.dim(0), p = a.dim(1), q = b.dim(1);
  std::vector<S> out(static_cast<size_t>(n) * (p + q));
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.value().begin() + static_cast<size_t>(i) * p, p,
                out.begin() + static_cast<size_t>(i) * (p + q));
    std::copy_n(b.value().begin() + static_cast<size_t>(i) * q, q,
                out.begin() + static_cast<size_t>(i) * (p + q) + p);
  }
  return detail::make_result<S>(
      {n, p + q}, std::move(out), {a, b}, [n, p, q](Node<S>& self) {
        Node<S>& pa = *self.parents[0];
        Node<S>& pb = *self.parents[1];
        for (int i = 0; i < n; ++i) {
          if (pa.requires_grad)
            for (int j = 0; j < p; ++j)
              pa.g()[i * p + j] += self.grad[i * (p + q) + j];
          if (pb.requires_grad)
            for (int j = 0; j < q; ++j)
              pb.g()[i * q + j] += self.grad[i * (p + q) + p + j];
        }
      });
}

// 1-D vector broadcast to N identical rows.
template <class S>
Tensor<S> repeat_row(const Tensor<S>& v, int n) {
  if (v.rank() != 1)
    throw std::invalid_argument("repeat_row: expected rank-1, got " + shape_str(v.shape()));
  const int d = v.dim(0);
  std::vector<S> out(static_cast<size_t>(n) * d);
  for (int i = 0; i < n; ++i)
    std::copy(v.value().begin(), v.value().end(), out.begin() + static_cast<size_t>(i) * d);
  return detail::make_result<S>(
      {n, d}, std::move(out), {v}, [n, d](Node<S>& self) {
        Node<S>& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.g();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) g[j] += self.grad[i * d + j];
      });
}

// Scalar ([1]) broadcast to a rank-1 vector of n copies.
template <class S>
Tensor<S> repeat_scalar(const Tensor<S>& v, int n) {
  if (v.size() != 1)
    throw std::invalid_argument("repeat_scalar: expected a scalar, got " +
                                shape_str(v.shape()));
  std::vector<S> out(static_cast<size_t>(n), v.value()[0]);
  return detail::make_result<S>(
      {n}, std::move(out), {v}, [n](Node<S>& self) {
        Node<S>& p = *self.parents[0];
        if (!p.requires_grad) return;
        S acc = S(0);
        for (int i = 0; i < n; ++i) acc += self.grad[i];
        p.g()[0] += acc;
      });
}

// ---- softmax ---------------------------------------------------------------

// Max-subtracted softmax. For rank-1 tensors axis must be 0; for rank-2,
// axis==1 normalizes each row, axis==0 each column.
template <class S>
Tensor<S> softmax(const Tensor<S>& x, int axis) {
  const int r = x.rank();
  if (!((r == 1 && axis == 0) || (r == 2 && (axis == 0 || axis == 1))))
    throw std::invalid_argument("softmax: bad axis " + std::to_string(axis) + " for " +
                                shape_str(x.shape()));
  const int rows = r == 1 ? 1 : x.dim(0);
  const int cols = r == 1 ? x.dim(0) : x.dim(1);
  const bool by_row = (r == 1) || axis == 1;
  const int groups = by_row ? rows : cols;
  const int len = by_row ? cols : rows;
  auto at = [by_row, cols](int g, int k) { return by_row ? g * cols + k : k * cols + g; };
  record_flops("softmax", 4ull * x.size());
  std::vector<S> out(x.size());
  for (int g = 0; g < groups; ++g) {
    S mx = x.value()[at(g, 0)];
    for (int k = 1; k < len; ++k) mx = std::max(mx, x.value()[at(g, k)]);
    S z = S(0);
    for (int k = 0; k < len; ++k) {
      out[at(g, k)] = std::exp(x.value()[at(g, k)] - mx);
      z += out[at(g, k)];
    }
    for (int k = 0; k < len; ++k) out[at(g, k)] /= z;
  }
  return detail::make_result<S>(
      x.shape(), std::move(out), {x}, [groups, len, at](Node<S>& self) {
        Node<S>& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.g();
        for (int gi = 0; gi < groups; ++gi) {
          S acc = S(0);
          for (int k = 0; k < len; ++k)
            acc += self.grad[at(gi, k)] * self.val[at(gi, k)];
          for (int k = 0; k < len; ++k)
            g[at(gi, k)] += self.val[at(gi, k)] * (self.grad[at(gi, k)] - acc);
        }
      });
}

// ---- token-axis convolutions ----------------------------------------------

// Cross-correlation along the token axis. x[N×d_in], kernel[k×d_in×d_out],
// zero padding (k-1)/2 so the token count is preserved. k must be odd.
template <class S>
Tensor<S> conv1d_tokens(const Tensor<S>& x, const Tensor<S>& kernel) {
  if (x.rank() != 2 || kernel.rank() != 3)
    throw std::invalid_argument("conv1d_tokens: expected [N×d] and [k×d×d_out], got " +
                                shape_str(x.shape()) + " and " + shape_str(kernel.shape()));
  const int n = x.dim(0), din = x.dim(1);
  const int k = kernel.dim(0), dout = kernel.dim(2);
  if (k % 2 == 0)
    throw std::invalid_argument("conv1d_tokens: kernel size must be odd, got " +
                                std::to_string(k));
  if (kernel.dim(1) != din)
    throw std::invalid_argument("conv1d_tokens: channel mismatch " + shape_str(x.shape()) +
                                " vs " + shape_str(kernel.shape()));
  const int pad = (k - 1) / 2;
  record_flops("conv1d", 2ull * n * k * din * dout);
  std::vector<S> out(static_cast<size_t>(n) * dout, S(0));
  const auto& xv = x.value();
  const auto& kv = kernel.value();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) {
      const int src = i + j - pad;
      if (src < 0 || src >= n) continue;
      for (int ci = 0; ci < din; ++ci) {
        const S xs = xv[src * din + ci];
        if (xs == S(0)) continue;
        for (int co = 0; co < dout; ++co)
          out[i * dout + co] += xs * kv[(j * din + ci) * dout + co];
      }
    }
  return detail::make_result<S>(
      {n, dout}, std::move(out), {x, kernel}, [n, din, k, dout, pad](Node<S>& self) {
        Node<S>& px = *self.parents[0];
        Node<S>& pk = *self.parents[1];
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < k; ++j) {
            const int src = i + j - pad;
            if (src < 0 || src >= n) continue;
            for (int ci = 0; ci < din; ++ci) {
              for (int co = 0; co < dout; ++co) {
                const S g = self.grad[i * dout + co];
                if (g == S(0)) continue;
                if (px.requires_grad)
                  px.g()[src * din + ci] += g * pk.val[(j * din + ci) * dout + co];
                if (pk.requires_grad)
                  pk.g()[(j * din + ci) * dout + co] += g * px.val[src * din + ci];
              }
            }
          }
      });
}

// Per-channel convolution along tokens, kernel[k×d], odd k, same padding.
template <class S>
Tensor<S> depthwise_conv1d(const Tensor<S>& x, const Tensor<S>& kernel) {
  if (x.rank() != 2 || kernel.rank() != 2 || kernel.dim(1) != x.dim(1))
    throw std::invalid_argument("depthwise_conv1d: shape mismatch " + shape_str(x.shape()) +
                                " vs " + shape_str(kernel.shape()));
  const int n = x.dim(0), d = x.dim(1), k = kernel.dim(0);
  if (k % 2 == 0)
    throw std::invalid_argument("depthwise_conv1d: kernel size must be odd, got " +
                                std::to_string(k));
  const int pad = (k - 1) / 2;
  record_flops("conv1d", 2ull * n * k * d);
  std::vector<S> out(x.size(), S(0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) {
      const int src = i + j - pad;
      if (src < 0 || src >= n) continue;
      for (int c = 0; c < d; ++c)
        out[i * d + c] += x.value()[src * d + c] * kernel.value()[j * d + c];
    }
  return detail::make_result<S>(
      {n, d}, std::move(out), {x, kernel}, [n, d, k, pad](Node<S>& self) {
        Node<S>& px = *self.parents[0];
        Node<S>& pk = *self.parents[1];
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < k; ++j) {
            const int src = i + j - pad;
            if (src < 0 || src >= n) continue;
            for (int c = 0; c < d; ++c) {
              const S g = self.grad[i * d + c];
              if (px.requires_grad) px.g()[src * d + c] += g * pk.val[j * d + c];
              if (pk.requires_grad) pk.g()[j * d + c] += g * px.val[src * d + c];
            }
          }
      });
}

// ---- adaptive pooling ------------------------------------------------------

// Group boundaries for mean pooling N tokens into out_n contiguous groups,
// earlier groups take the extra token: b_i = ceil(i*N/out_n).
inline std::vector<int> pool_boundaries(int n, int out_n) {
  std::vector<int> b(out_n + 1);
  for (int i = 0; i <= out_n; ++i)
    b[i] = static_cast<int>((static_cast<long long>(i) * n + out_n - 1) / out_n);
  b[out_n] = n;
  return b;
}

template <class S>
Tensor<S> adaptive_pool(const Tensor<S>& x, int out_n) {
  if (out_n <= 0) throw std::invalid_argument("adaptive_pool: out_n must be positive");
  if (x.rank() != 2)
    throw std::invalid_argument("adaptive_pool: expected rank-2, got " + shape_str(x.shape()));
  const int n = x.dim(0), d = x.dim(1);
  if (out_n >= n) {
    // Pad by repeating the last token.
    std::vector<int> idx(out_n);
    for (int i = 0; i < out_n; ++i) idx[i] = std::min(i, n - 1);
    return gather_rows(x, idx);
  }
  const auto b = pool_boundaries(n, out_n);
  record_flops("pool", static_cast<std::uint64_t>(n) * d);
  std::vector<S> out(static_cast<size_t>(out_n) * d, S(0));
  for (int gi = 0; gi < out_n; ++gi) {
    const int lo = b[gi], hi = b[gi + 1];
    for (int i = lo; i < hi; ++i)
      for (int j = 0; j < d; ++j) out[gi * d + j] += x.value()[i * d + j];
    for (int j = 0; j < d; ++j) out[gi * d + j] /= S(hi - lo);
  }
  return detail::make_result<S>(
      {out_n, d}, std::move(out), {x}, [b, out_n, d](Node<S>& self) {
        Node<S>& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.g();
        for (int gi = 0; gi < out_n; ++gi) {
          const int lo = b[gi], hi = b[gi + 1];
          for (int i = lo; i < hi; ++i)
            for (int j = 0; j < d; ++j)
              g[i * d + j] += self.grad[gi * d + j] / S(hi - lo);
        }
      });
}

// ---- layer norm ------------------------------------------------------------

// Row-wise layer normalization with learnable gain and bias.
template <class S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias,
                     S eps = S(1e-5)) {
  if (x.rank() != 2 || gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != x.dim(1) ||
      bias.dim(0) != x.dim(1))
    throw std::invalid_argument("layer_norm: shape mismatch " + shape_str(x.shape()) +
                                " gain " + shape_str(gain.shape()));
  const int n = x.dim(0), d = x.dim(1);
  record_flops("layernorm", 6ull * x.size());
  std::vector<S> out(x.size()), xhat(x.size()), inv_std(n);
  for (int i = 0; i < n; ++i) {
    S mu = S(0);
    for (int j = 0; j < d; ++j) mu += x.value()[i * d + j];
    mu /= S(d);
    S var = S(0);
    for (int j = 0; j < d; ++j) {
      const S c = x.value()[i * d + j] - mu;
      var += c * c;
    }
    var /= S(d);
    inv_std[i] = S(1) / std::sqrt(var + eps);
    for (int j = 0; j < d; ++j) {
      xhat[i * d + j] = (x.value()[i * d + j] - mu) * inv_std[i];
      out[i * d + j] = xhat[i * d + j] * gain.value()[j] + bias.value()[j];
    }
  }
  return detail::make_result<S>(
      {n, d}, std::move(out), {x, gain, bias},
      [n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<S>& self) {
        Node<S>& px = *self.parents[0];
        Node<S>& pg = *self.parents[1];
        Node<S>& pb = *self.parents[2];
        for (int i = 0; i < n; ++i) {
          S mean_dxhat = S(0), mean_dxhat_xhat = S(0);
          for (int j = 0; j < d; ++j) {
            const S dy = self.grad[i * d + j];
            const S dxh = dy * pg.val[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat[i * d + j];
            if (pg.requires_grad) pg.g()[j] += dy * xhat[i * d + j];
            if (pb.requires_grad) pb.g()[j] += dy;
          }
          mean_dxhat /= S(d);
          mean_dxhat_xhat /= S(d);
          if (px.requires_grad) {
            auto& g = px.g();
            for (int j = 0; j < d; ++j) {
              const S dxh = self.grad[i * d + j] * pg.val[j];
              g[i * d + j] +=
                  inv_std[i] * (dxh - mean_dxhat - xhat[i * d + j] * mean_dxhat_xhat);
            }
          }
        }
      });
}

// ---- activation dispatch ---------------------------------------------------

enum class Activation { Relu, Selu, Sigmoid };

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "selu") return Activation::Selu;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw std::invalid_argument("unknown activation kind: " + s);
}

template <class S>
Tensor<S> activation(const Tensor<S>& x, Activation kind) {
  switch (kind) {
    case Activation::Relu: return relu(x);
    case Activation::Selu: return selu(x);
    case Activation::Sigmoid: return sigmoid(x);
  }
  throw std::invalid_argument("unknown activation kind");
}

}  // namespace adamhf
