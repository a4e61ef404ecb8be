#pragma once

// Dense reverse-mode automatic differentiation over rank-1/rank-2 double
// tensors. A Tape records every op with its backward rule; Var is a handle into
// the tape. Only the ops the message-passing model needs are provided.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "routenet/error.hpp"
#include "routenet/rng.hpp"

namespace routenet::ad {

class Tensor {
 public:
  Tensor() = default;

  /// Rank-1 tensor of extent n.
  explicit Tensor(std::size_t n, double fill = 0.0) : rank_(1), dims_{n, 1}, values_(n, fill) {}

  /// Rank-2 row-major tensor.
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rank_(2), dims_{rows, cols}, values_(rows * cols, fill) {}

  /// Any pair of integers is (rows, cols).
  template <std::integral R, std::integral C>
  Tensor(R rows, C cols)
      : Tensor(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), 0.0) {}

  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rank_(2), dims_{rows, cols}, values_(std::move(values)) {
    require(values_.size() == rows * cols, "tensor value count does not match shape");
  }

  static Tensor vector(std::vector<double> values) {
    Tensor t;
    t.rank_ = 1;
    t.dims_ = {values.size(), 1};
    t.values_ = std::move(values);
    return t;
  }

  static Tensor scalar(double v) { return Tensor(1, 1, std::vector<double>{v}); }

  static Tensor from_shape(const std::vector<std::size_t>& shape, std::vector<double> values) {
    require(shape.size() == 1 || shape.size() == 2, "only rank-1 and rank-2 tensors are supported");
    if (shape.size() == 1) {
      require(values.size() == shape[0], "tensor value count does not match shape");
      return vector(std::move(values));
    }
    return Tensor(shape[0], shape[1], std::move(values));
  }

  [[nodiscard]] std::size_t rank() const noexcept { return rank_; }
  [[nodiscard]] std::vector<std::size_t> shape() const {
    if (rank_ == 1) return {dims_[0]};
    return {dims_[0], dims_[1]};
  }
  /// Rank-1 tensors behave as a single row.
  [[nodiscard]] std::size_t rows() const noexcept { return rank_ == 1 ? 1 : dims_[0]; }
  [[nodiscard]] std::size_t cols() const noexcept { return rank_ == 1 ? dims_[0] : dims_[1]; }
  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
  [[nodiscard]] bool same_shape(const Tensor& o) const noexcept {
    return rank_ == o.rank_ && dims_ == o.dims_;
  }

  [[nodiscard]] std::span<double> values() noexcept { return values_; }
  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
  [[nodiscard]] double* data() noexcept { return values_.data(); }
  [[nodiscard]] const double* data() const noexcept { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  [[nodiscard]] double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  [[nodiscard]] std::string shape_string() const {
    std::ostringstream os;
    os << "[" << dims_[0];
    if (rank_ == 2) os << "," << dims_[1];
    os << "]";
    return os.str();
  }

  [[nodiscard]] bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  bool operator==(const Tensor&) const = default;

 private:
  std::size_t rank_ = 2;
  std::array<std::size_t, 2> dims_{0, 0};
  std::vector<double> values_;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

inline ConstMatMap as_matrix(const Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}
inline MatMap as_matrix(Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

// ---------------------------------------------------------------------------
// Special functions.

/// log Gamma(x) for x > 0 via the Lanczos approximation (g = 7, 9 terms).
inline double lanczos_lgamma(double x) {
  static constexpr std::array<double, 9> kCoef = {
      0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
      771.32342877765313,   -176.61502916214059,   12.507343278686905,
      -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
  if (x < 0.5) {
    // Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x).
    return std::log(std::numbers::pi / std::abs(std::sin(std::numbers::pi * x))) - lanczos_lgamma(1.0 - x);
  }
  x -= 1.0;
  double a = kCoef[0];
  const double t = x + 7.5;
  for (int i = 1; i < 9; ++i) a += kCoef[static_cast<std::size_t>(i)] / (x + i);
  return 0.5 * std::log(2.0 * std::numbers::pi) + (x + 0.5) * std::log(t) - t + std::log(a);
}

/// Digamma via upward recurrence and the asymptotic series.
inline double digamma(double x) {
  double result = 0.0;
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double f = 1.0 / (x * x);
  result += std::log(x) - 0.5 / x -
            f * (1.0 / 12 - f * (1.0 / 120 - f * (1.0 / 252 - f * (1.0 / 240 - f * (1.0 / 132)))));
  return result;
}

inline constexpr double kSeluLambda = 1.0507009873554804934193349852946;
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// ---------------------------------------------------------------------------
// Tape.

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable leaf; its gradient is available after backward().
  Var leaf(Tensor value) { return push(std::move(value), true, {}); }
  Var constant(Tensor value) { return push(std::move(value), false, {}); }

  [[nodiscard]] const Tensor& value(Var v) const { return nodes_[v.id].value; }
  [[nodiscard]] const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  [[nodiscard]] bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient buffer; zero-initialized on first access during backward.
  Tensor& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size() || !n.grad.same_shape(n.value)) n.grad = zeros_like(n.value);
    return n.grad;
  }
  Tensor& grad(Var v) { return grad(v.id); }

  /// Records a derived node. `back` runs only when some input needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward back) {
    bool any = false;
    for (Var in : inputs) any = any || nodes_[in.id].needs_grad;
    return push(std::move(value), any, any ? std::move(back) : Backward{});
  }
  Var record(Tensor value, const std::vector<Var>& inputs, Backward back) {
    bool any = false;
    for (Var in : inputs) any = any || nodes_[in.id].needs_grad;
    return push(std::move(value), any, any ? std::move(back) : Backward{});
  }

  /// Reverse sweep from a scalar node; every recorded node is visited once.
  void backward(Var loss) {
    require(value(loss).size() == 1, "backward() needs a scalar loss, got shape " +
                                         value(loss).shape_string());
    for (auto& n : nodes_) n.grad = Tensor();
    grad(loss)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || !n.back) continue;
      if (n.grad.size() == 0) continue;  // no gradient flowed here
      n.back(*this, i);
    }
    // Leaves that received nothing still report a zero gradient.
    for (auto& n : nodes_)
      if (n.needs_grad && n.grad.size() != n.value.size()) n.grad = zeros_like(n.value);
  }

  void check_finite(Var v, const char* op) const {
#ifndef NDEBUG
    if (!value(v).all_finite()) fail(ErrorKind::kNumerical, std::string("non-finite output from ") + op);
#else
    (void)v;
    (void)op;
#endif
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward back;
    bool needs_grad = false;
  };

  static Tensor zeros_like(const Tensor& t) {
    if (t.rank() == 1) return Tensor(t.size(), 0.0);
    return Tensor(t.rows(), t.cols(), 0.0);
  }

  Var push(Tensor value, bool needs_grad, Backward back) {
    nodes_.push_back(Node{std::move(value), Tensor(), std::move(back), needs_grad});
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Primitive ops.

namespace detail {

inline Tensor like(const Tensor& t, double fill = 0.0) {
  if (t.rank() == 1) return Tensor(t.size(), fill);
  return Tensor(t.rows(), t.cols(), fill);
}

inline void check_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    fail(ErrorKind::kInvalidArgument,
         std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

// Elementwise unary op with derivative expressed via input x and output y.
template <typename F, typename D>
Var unary(Var a, F f, D dfdx, const char* name) {
  Tape& tp = *a.tape;
  const Tensor& x = tp.value(a);
  Tensor y = like(x);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  Var out = tp.record(std::move(y), {a}, [a, dfdx](Tape& t, std::size_t self) {
    const Tensor& xv = t.value(a);
    const Tensor& yv = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < xv.size(); ++i) ga[i] += g[i] * dfdx(xv[i], yv[i]);
  });
  tp.check_finite(out, name);
  return out;
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& tp = *a.tape;
  const Tensor& av = tp.value(a);
  const Tensor& bv = tp.value(b);
  if (av.cols() != bv.rows())
    fail(ErrorKind::kInvalidArgument,
         "matmul: shape mismatch " + av.shape_string() + " x " + bv.shape_string());
  Tensor c(av.rows(), bv.cols());
  as_matrix(c).noalias() = as_matrix(av) * as_matrix(bv);
  return tp.record(std::move(c), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(a.id)) as_matrix(t.grad(a)).noalias() += as_matrix(g) * as_matrix(t.value(b)).transpose();
    if (t.needs_grad(b.id)) as_matrix(t.grad(b)).noalias() += as_matrix(t.value(a)).transpose() * as_matrix(g);
  });
}

inline Var add(Var a, Var b) {
  Tape& tp = *a.tape;
  detail::check_same(tp.value(a), tp.value(b), "add");
  Tensor c = tp.value(a);
  const Tensor& bv = tp.value(b);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += bv[i];
  return tp.record(std::move(c), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (Var in : {a, b}) {
      if (!t.needs_grad(in.id)) continue;
      Tensor& gi = t.grad(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

inline Var sub(Var a, Var b) {
  Tape& tp = *a.tape;
  detail::check_same(tp.value(a), tp.value(b), "sub");
  Tensor c = tp.value(a);
  const Tensor& bv = tp.value(b);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= bv[i];
  return tp.record(std::move(c), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(a.id)) {
      Tensor& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(b.id)) {
      Tensor& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  Tape& tp = *a.tape;
  detail::check_same(tp.value(a), tp.value(b), "mul");
  Tensor c = tp.value(a);
  const Tensor& bv = tp.value(b);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= bv[i];
  return tp.record(std::move(c), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(a.id)) {
      const Tensor& bv2 = t.value(b);
      Tensor& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
    }
    if (t.needs_grad(b.id)) {
      const Tensor& av2 = t.value(a);
      Tensor& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
    }
  });
}

/// a[m,n] + bias[n] broadcast over rows.
inline Var add_bias(Var a, Var bias) {
  Tape& tp = *a.tape;
  const Tensor& bv = tp.value(bias);
  Tensor c = tp.value(a);
  if (bv.size() != c.cols())
    fail(ErrorKind::kInvalidArgument,
         "add_bias: shape mismatch " + c.shape_string() + " + " + bv.shape_string());
  const std::size_t n = c.cols();
  for (std::size_t r = 0; r < c.rows(); ++r)
    for (std::size_t j = 0; j < n; ++j) c[r * n + j] += bv[j];
  return tp.record(std::move(c), {a, bias}, [a, bias](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const std::size_t cols = g.cols();
    if (t.needs_grad(a.id)) {
      Tensor& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(bias.id)) {
      Tensor& gb = t.grad(bias);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t j = 0; j < cols; ++j) gb[j] += g[r * cols + j];
    }
  });
}

/// s * a + c for constants s, c.
inline Var affine_scalar(Var a, double s, double c) {
  Tape& tp = *a.tape;
  Tensor y = tp.value(a);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = s * y[i] + c;
  return tp.record(std::move(y), {a}, [a, s](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

inline Var scale(Var a, double s) { return affine_scalar(a, s, 0.0); }
inline Var one_minus(Var a) { return affine_scalar(a, -1.0, 1.0); }

/// Multiplies each row r of a[m,n] by w[r] (w is a constant vector).
inline Var scale_rows(Var a, std::vector<double> w) {
  Tape& tp = *a.tape;
  Tensor y = tp.value(a);
  require(w.size() == y.rows(), "scale_rows: weight count must equal row count");
  const std::size_t n = y.cols();
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] *= w[r];
  return tp.record(std::move(y), {a}, [a, w = std::move(w)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    const std::size_t cols = g.cols();
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t j = 0; j < cols; ++j) ga[r * cols + j] += g[r * cols + j] * w[r];
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  Tape& tp = *parts.front().tape;
  const std::size_t rows = tp.value(parts.front()).rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    if (tp.value(p).rows() != rows)
      fail(ErrorKind::kInvalidArgument, "concat_cols: row mismatch " + tp.value(parts.front()).shape_string() +
                                            " vs " + tp.value(p).shape_string());
    cols += tp.value(p).cols();
  }
  Tensor y(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& v = tp.value(p);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data() + r * v.cols(), v.cols(), y.data() + r * cols + off);
    off += v.cols();
  }
  return tp.record(std::move(y), parts, [parts](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t offset = 0;
    for (Var p : parts) {
      const std::size_t pc = t.value(p).cols();
      if (t.needs_grad(p.id)) {
        Tensor& gp = t.grad(p);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t j = 0; j < pc; ++j) gp[r * pc + j] += g[r * g.cols() + offset + j];
      }
      offset += pc;
    }
  });
}

/// Columns [begin, end) of a.
inline Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& tp = *a.tape;
  const Tensor& av = tp.value(a);
  require(begin <= end && end <= av.cols(), "slice_cols: range out of bounds for " + av.shape_string());
  const std::size_t w = end - begin;
  Tensor y(av.rows(), w);
  for (std::size_t r = 0; r < av.rows(); ++r)
    std::copy_n(av.data() + r * av.cols() + begin, w, y.data() + r * w);
  return tp.record(std::move(y), {a}, [a, begin, w](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    const std::size_t ac = ga.cols();
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t j = 0; j < w; ++j) ga[r * ac + begin + j] += g[r * w + j];
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Tape& tp = *parts.front().tape;
  const std::size_t cols = tp.value(parts.front()).cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    if (tp.value(p).cols() != cols)
      fail(ErrorKind::kInvalidArgument, "concat_rows: column mismatch " +
                                            tp.value(parts.front()).shape_string() + " vs " +
                                            tp.value(p).shape_string());
    rows += tp.value(p).rows();
  }
  Tensor y(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& v = tp.value(p);
    std::copy(v.values().begin(), v.values().end(), y.data() + off);
    off += v.size();
  }
  return tp.record(std::move(y), parts, [parts](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t offset = 0;
    for (Var p : parts) {
      const std::size_t n = t.value(p).size();
      if (t.needs_grad(p.id)) {
        Tensor& gp = t.grad(p);
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
      }
      offset += n;
    }
  });
}

/// Rows [begin, end) of a.
inline Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  Tape& tp = *a.tape;
  const Tensor& av = tp.value(a);
  require(begin <= end && end <= av.rows(), "slice_rows: range out of bounds for " + av.shape_string());
  const std::size_t c = av.cols();
  Tensor y(end - begin, c);
  std::copy_n(av.data() + begin * c, (end - begin) * c, y.data());
  return tp.record(std::move(y), {a}, [a, begin](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    const std::size_t off = begin * ga.cols();
    for (std::size_t i = 0; i < g.size(); ++i) ga[off + i] += g[i];
  });
}

/// out[i] = a[index[i]].
inline Var gather_rows(Var a, std::vector<std::size_t> index) {
  Tape& tp = *a.tape;
  const Tensor& av = tp.value(a);
  const std::size_t c = av.cols();
  Tensor y(index.size(), c);
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] < av.rows(), "gather_rows: index out of range");
    std::copy_n(av.data() + index[i] * c, c, y.data() + i * c);
  }
  return tp.record(std::move(y), {a}, [a, index = std::move(index)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    const std::size_t cols = g.cols();
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t j = 0; j < cols; ++j) ga[index[i] * cols + j] += g[i * cols + j];
  });
}

/// out[index[i]] += a[i]; out has `rows` rows.
inline Var scatter_add_rows(Var a, std::vector<std::size_t> index, std::size_t rows) {
  Tape& tp = *a.tape;
  const Tensor& av = tp.value(a);
  require(index.size() == av.rows(), "scatter_add_rows: one index per input row required");
  const std::size_t c = av.cols();
  Tensor y(rows, c);
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] < rows, "scatter_add_rows: index out of range");
    for (std::size_t j = 0; j < c; ++j) y[index[i] * c + j] += av[i * c + j];
  }
  return tp.record(std::move(y), {a}, [a, index = std::move(index)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    const std::size_t cols = g.cols();
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t j = 0; j < cols; ++j) ga[i * cols + j] += g[index[i] * cols + j];
  });
}

/// Sum of all elements, as a 1x1 tensor.
inline Var sum(Var a) {
  Tape& tp = *a.tape;
  double s = 0.0;
  for (double v : tp.value(a).values()) s += v;
  return tp.record(Tensor::scalar(s), {a}, [a](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

/// axis 0: column sums -> [1, n]; axis 1: row sums -> [m, 1].
inline Var sum_axis(Var a, int axis) {
  Tape& tp = *a.tape;
  const Tensor& av = tp.value(a);
  require(axis == 0 || axis == 1, "sum_axis: axis must be 0 or 1");
  const std::size_t m = av.rows();
  const std::size_t n = av.cols();
  Tensor y = axis == 0 ? Tensor(1, n) : Tensor(m, 1);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < n; ++j) y[axis == 0 ? j : r] += av[r * n + j];
  return tp.record(std::move(y), {a}, [a, axis](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    const std::size_t cols = ga.cols();
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t j = 0; j < cols; ++j) ga[r * cols + j] += g[axis == 0 ? j : r];
  });
}

/// Weighted sum of all elements with constant weights.
inline Var dot_const(Var a, std::vector<double> w) {
  Tape& tp = *a.tape;
  const Tensor& av = tp.value(a);
  require(w.size() == av.size(), "dot_const: weight count must equal element count");
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * av[i];
  return tp.record(Tensor::scalar(s), {a}, [a, w = std::move(w)](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < w.size(); ++i) ga[i] += g * w[i];
  });
}

inline Var selu(Var a) {
  return detail::unary(
      a, [](double x) { return x > 0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x); },
      [](double x, double y) { return x > 0 ? kSeluLambda : y + kSeluLambda * kSeluAlpha; }, "selu");
}

inline Var sigmoid(Var a) {
  return detail::unary(
      a, [](double x) { return ad::sigmoid(x); }, [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

inline Var tanh(Var a) {
  return detail::unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; }, "tanh");
}

inline Var softplus(Var a) {
  return detail::unary(
      a, [](double x) { return ad::softplus(x); }, [](double x, double) { return ad::sigmoid(x); }, "softplus");
}

inline Var log(Var a) {
  return detail::unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; }, "log");
}

inline Var exp(Var a) {
  return detail::unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; }, "exp");
}

inline Var reciprocal(Var a) {
  return detail::unary(
      a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; }, "reciprocal");
}

inline Var square(Var a) {
  return detail::unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; }, "square");
}

inline Var lgamma(Var a) {
  return detail::unary(
      a, [](double x) { return lanczos_lgamma(x); }, [](double x, double) { return digamma(x); }, "lgamma");
}

/// Train mode: zero each element with probability `rate`, scale survivors by
/// 1/(1-rate). Eval mode (or rate 0): identity.
inline Var dropout(Var a, double rate, bool train, std::uint64_t seed) {
  require(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0,1)");
  if (!train || rate == 0.0) return a;
  Tape& tp = *a.tape;
  const Tensor& av = tp.value(a);
  SplitMix64 rng(seed);
  std::vector<double> mask(av.size());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
  return tp.record(std::move(y), {a}, [a, mask = std::move(mask)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
  });
}

// ---------------------------------------------------------------------------
// Parameters, initialization and optimization.

struct Param {
  Tensor value;
  bool is_weight = true;  // weight matrices take L2; biases do not
};

using ParamStore = std::map<std::string, Param>;
using GradStore = std::map<std::string, Tensor>;

/// Glorot-uniform matrix in [-a, a], a = sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, SplitMix64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(fan_in, fan_out);
  for (double& v : t.values()) v = rng.uniform(-a, a);
  return t;
}

/// Leaves for every parameter, registered in name order.
inline std::map<std::string, Var> bind_params(Tape& tape, const ParamStore& params) {
  std::map<std::string, Var> out;
  for (const auto& [name, p] : params) out.emplace(name, tape.leaf(p.value));
  return out;
}

inline GradStore collect_grads(Tape& tape, const std::map<std::string, Var>& vars) {
  GradStore out;
  for (const auto& [name, v] : vars) out.emplace(name, tape.grad(v));
  return out;
}

/// decay * sum of squared weight-matrix entries.
inline double l2_penalty(const ParamStore& params, double decay) {
  double s = 0.0;
  for (const auto& [name, p] : params)
    if (p.is_weight)
      for (double v : p.value.values()) s += v * v;
  return decay * s;
}

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  double weight_decay = 0.0;  // coefficient of the L2 loss term
};

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::int64_t step = 0;
};

/// Bias-corrected Adam. weight_decay adds the gradient of decay * ||W||^2
/// (i.e. 2 * decay * W) to weight matrices before the moment update, which is
/// the coupled L2 formulation rather than decoupled decay.
inline void adam_step(ParamStore& params, const GradStore& grads, AdamState& state, const AdamConfig& cfg) {
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    require(git != grads.end(), "adam_step: missing gradient for " + name);
    const Tensor& g = git->second;
    require(g.same_shape(p.value), "adam_step: gradient shape mismatch for " + name);
    auto [mit, mnew] = state.m.try_emplace(name, detail::like(p.value));
    auto [vit, vnew] = state.v.try_emplace(name, detail::like(p.value));
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    const bool decay = p.is_weight && cfg.weight_decay > 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i] + (decay ? 2.0 * cfg.weight_decay * p.value[i] : 0.0);
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// GRU cell.

/// Parameter names for a GRU cell stored under `prefix`:
///   W  [d_in, 3 d_h]  input weights for (z | r | candidate)
///   Uzr [d_h, 2 d_h]  recurrent weights for (z | r)
///   Uh [d_h, d_h]     recurrent weights for the candidate
///   b  [3 d_h]        biases
struct GruCell {
  std::string prefix;
  std::size_t input_dim = 0;
  std::size_t state_dim = 0;

  void init(ParamStore& params, SplitMix64& rng) const {
    params[prefix + ".W"] = {glorot_uniform(input_dim, 3 * state_dim, rng), true};
    params[prefix + ".Uzr"] = {glorot_uniform(state_dim, 2 * state_dim, rng), true};
    params[prefix + ".Uh"] = {glorot_uniform(state_dim, state_dim, rng), true};
    params[prefix + ".b"] = {Tensor(3 * state_dim, 0.0), false};
  }
};

struct GruVars {
  Var W, Uzr, Uh, b;
  std::size_t state_dim = 0;

  static GruVars from(const GruCell& cell, const std::map<std::string, Var>& vars) {
    return {vars.at(cell.prefix + ".W"), vars.at(cell.prefix + ".Uzr"), vars.at(cell.prefix + ".Uh"),
            vars.at(cell.prefix + ".b"), cell.state_dim};
  }
};

/// Batched GRU step over rows: state [m, d_h], input [m, d_in].
///   z = sig(x Wz + h Uz + bz), r = sig(x Wr + h Ur + br)
///   c = tanh(x Wh + (r*h) Uh + bh), h' = (1 - z) * h + z * c
inline Var gru_step(const GruVars& g, Var state, Var input) {
  Tape& tp = *state.tape;
  const std::size_t d = g.state_dim;
  if (tp.value(state).cols() != d || tp.value(g.W).rows() != tp.value(input).cols() ||
      tp.value(state).rows() != tp.value(input).rows())
    fail(ErrorKind::kInvalidArgument, "gru_step: dimension mismatch state " + tp.value(state).shape_string() +
                                          " input " + tp.value(input).shape_string());
  Var xw = add_bias(matmul(input, g.W), g.b);
  Var hu = matmul(state, g.Uzr);
  Var z = sigmoid(add(slice_cols(xw, 0, d), slice_cols(hu, 0, d)));
  Var r = sigmoid(add(slice_cols(xw, d, 2 * d), slice_cols(hu, d, 2 * d)));
  Var c = tanh(add(slice_cols(xw, 2 * d, 3 * d), matmul(mul(r, state), g.Uh)));
  return add(mul(one_minus(z), state), mul(z, c));
}

}  // namespace routenet::ad
