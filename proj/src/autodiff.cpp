#include "pcsg/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace pcsg::ad {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const MatR>;
using MMap = Eigen::Map<MatR>;

struct AxisLayout {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

AxisLayout layout(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  }
  AxisLayout l;
  for (std::size_t i = 0; i < axis; ++i) l.outer *= s[i];
  l.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) l.inner *= s[i];
  return l;
}

Tape& common_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw std::logic_error("operands recorded on different tapes");
  return a.tape();
}

void accumulate(Tape& t, std::size_t id, std::span<const double> g) {
  if (!t.requires_grad(id)) return;
  auto buf = t.grad_buffer(id);
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

// Unary elementwise op whose derivative is expressed through (input, output).
template <class F, class D>
Var unary(Var a, F f, D df) {
  Tape& t = a.tape();
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id();
  return t.record(std::move(y), {ia}, [ia, df](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const Tensor& x = tp.value(ia);
    const Tensor& y = tp.value(self);
    const Tensor& g = tp.grad_ref(self);
    auto buf = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < x.size(); ++i) buf[i] += g[i] * df(x[i], y[i]);
  });
}

enum class BinOp { kAdd, kSub, kMul };

Var binary(Var a, Var b, BinOp op) {
  Tape& t = common_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  const bool same = x.shape() == z.shape();
  const bool a_scalar = x.size() == 1 && !same;
  const bool b_scalar = z.size() == 1 && !same;
  if (!same && !a_scalar && !b_scalar) {
    throw ShapeError("elementwise shape mismatch: " + to_string(x.shape()) + " vs " +
                     to_string(z.shape()));
  }
  const Shape out_shape = a_scalar ? z.shape() : x.shape();
  const std::size_t n = numel(out_shape);
  Tensor y(out_shape);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = a_scalar ? x[0] : x[i];
    const double v = b_scalar ? z[0] : z[i];
    switch (op) {
      case BinOp::kAdd: y[i] = u + v; break;
      case BinOp::kSub: y[i] = u - v; break;
      case BinOp::kMul: y[i] = u * v; break;
    }
  }
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return t.record(std::move(y), {ia, ib},
                  [ia, ib, op, a_scalar, b_scalar, n](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad_ref(self);
                    const Tensor& x = tp.value(ia);
                    const Tensor& z = tp.value(ib);
                    if (tp.requires_grad(ia)) {
                      auto buf = tp.grad_buffer(ia);
                      for (std::size_t i = 0; i < n; ++i) {
                        double d = g[i];
                        if (op == BinOp::kMul) d *= b_scalar ? z[0] : z[i];
                        buf[a_scalar ? 0 : i] += d;
                      }
                    }
                    if (tp.requires_grad(ib)) {
                      auto buf = tp.grad_buffer(ib);
                      for (std::size_t i = 0; i < n; ++i) {
                        double d = g[i];
                        if (op == BinOp::kSub) d = -d;
                        if (op == BinOp::kMul) d *= a_scalar ? x[0] : x[i];
                        buf[b_scalar ? 0 : i] += d;
                      }
                    }
                  });
}

}  // namespace

std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << ']';
  return os.str();
}

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != numel(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + to_string(shape_));
  }
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

// ---- Var / Tape ------------------------------------------------------------

const Tensor& Var::value() const { return tape().value(id_); }

Tape& Var::tape() const {
  if (tape_ == nullptr) throw std::logic_error("use of an unbound Var");
  return *tape_;
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> parents, BackwardFn fn) {
  const bool rg = std::any_of(parents.begin(), parents.end(),
                              [this](std::size_t p) { return nodes_[p].requires_grad; });
  Node n{std::move(value), {}, std::move(parents), rg ? std::move(fn) : BackwardFn{}, rg};
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

std::span<double> Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) {
    n.grad = Tensor(n.value.shape(), 0.0);
  }
  return n.grad.data();
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw std::logic_error("backward on a Var from another tape");
  if (backward_done_) throw std::logic_error("backward already run on this tape");
  if (loss.value().size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
  }
  backward_done_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward(*this, i);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id());
  if (n.grad.size() == n.value.size() && n.grad.shape() == n.value.shape()) return n.grad;
  return Tensor(n.value.shape(), 0.0);
}

// ---- arithmetic ------------------------------------------------------------

Var add(Var a, Var b) { return binary(a, b, BinOp::kAdd); }
Var sub(Var a, Var b) { return binary(a, b, BinOp::kSub); }
Var mul(Var a, Var b) { return binary(a, b, BinOp::kMul); }

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var add_bias(Var a, Var bias) {
  Tape& t = common_tape(a, bias);
  const Tensor& x = a.value();
  const Tensor& b = bias.value();
  if (x.rank() != 2 || b.size() != x.dim(1)) {
    throw ShapeError("add_bias shape mismatch: " + to_string(x.shape()) + " vs " +
                     to_string(b.shape()));
  }
  const std::size_t m = x.dim(0);
  const std::size_t n = x.dim(1);
  Tensor y = x;
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) y[r * n + c] += b[c];
  const std::size_t ia = a.id();
  const std::size_t ib = bias.id();
  return t.record(std::move(y), {ia, ib}, [ia, ib, m, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_ref(self);
    accumulate(tp, ia, g.data());
    if (tp.requires_grad(ib)) {
      auto buf = tp.grad_buffer(ib);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) buf[c] += g[r * n + c];
    }
  });
}

Var matmul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  if (x.rank() != 2 || z.rank() != 2 || x.dim(1) != z.dim(0)) {
    throw ShapeError("matmul shape mismatch: " + to_string(x.shape()) + " vs " +
                     to_string(z.shape()));
  }
  const auto m = static_cast<Eigen::Index>(x.dim(0));
  const auto k = static_cast<Eigen::Index>(x.dim(1));
  const auto n = static_cast<Eigen::Index>(z.dim(1));
  Tensor y(Shape{x.dim(0), z.dim(1)});
  MMap(y.data().data(), m, n).noalias() = CMap(x.data().data(), m, k) * CMap(z.data().data(), k, n);
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return t.record(std::move(y), {ia, ib}, [ia, ib, m, k, n](Tape& tp, std::size_t self) {
    CMap g(tp.grad_ref(self).data().data(), m, n);
    if (tp.requires_grad(ia)) {
      MMap(tp.grad_buffer(ia).data(), m, k).noalias() +=
          g * CMap(tp.value(ib).data().data(), k, n).transpose();
    }
    if (tp.requires_grad(ib)) {
      MMap(tp.grad_buffer(ib).data(), k, n).noalias() +=
          CMap(tp.value(ia).data().data(), m, k).transpose() * g;
    }
  });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  if (x.rank() != 2) throw ShapeError("transpose needs rank 2, got " + to_string(x.shape()));
  const auto m = static_cast<Eigen::Index>(x.dim(0));
  const auto n = static_cast<Eigen::Index>(x.dim(1));
  Tensor y(Shape{x.dim(1), x.dim(0)});
  MMap(y.data().data(), n, m) = CMap(x.data().data(), m, n).transpose();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {ia}, [ia, m, n](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    MMap(tp.grad_buffer(ia).data(), m, n) += CMap(tp.grad_ref(self).data().data(), n, m).transpose();
  });
}

// ---- elementwise nonlinearities --------------------------------------------

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(a,
               [](double x) {
                 if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                 const double e = std::exp(x);
                 return e / (1.0 + e);
               },
               [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sin(Var a) {
  return unary(a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Var abs(Var a) {
  return unary(a, [](double x) { return std::abs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var sqrt(Var a) {
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var max_with_scalar(Var a, double threshold) {
  return unary(a, [threshold](double x) { return x > threshold ? x : threshold; },
               [threshold](double x, double) { return x > threshold ? 1.0 : 0.0; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

// ---- softmax family --------------------------------------------------------

Var softmax(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  const AxisLayout l = layout(x.shape(), axis);
  Tensor y(x.shape());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t base = o * l.n * l.inner + i;
      double mx = -INFINITY;
      for (std::size_t k = 0; k < l.n; ++k) mx = std::max(mx, x[base + k * l.inner]);
      double s = 0.0;
      for (std::size_t k = 0; k < l.n; ++k) {
        const double e = std::exp(x[base + k * l.inner] - mx);
        y[base + k * l.inner] = e;
        s += e;
      }
      for (std::size_t k = 0; k < l.n; ++k) y[base + k * l.inner] /= s;
    }
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {ia}, [ia, l](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const Tensor& y = tp.value(self);
    const Tensor& g = tp.grad_ref(self);
    auto buf = tp.grad_buffer(ia);
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t i = 0; i < l.inner; ++i) {
        const std::size_t base = o * l.n * l.inner + i;
        double d = 0.0;
        for (std::size_t k = 0; k < l.n; ++k) d += g[base + k * l.inner] * y[base + k * l.inner];
        for (std::size_t k = 0; k < l.n; ++k) {
          const std::size_t j = base + k * l.inner;
          buf[j] += y[j] * (g[j] - d);
        }
      }
    }
  });
}

Var log_softmax(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  const AxisLayout l = layout(x.shape(), axis);
  Tensor y(x.shape());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t base = o * l.n * l.inner + i;
      double mx = -INFINITY;
      for (std::size_t k = 0; k < l.n; ++k) mx = std::max(mx, x[base + k * l.inner]);
      double s = 0.0;
      for (std::size_t k = 0; k < l.n; ++k) s += std::exp(x[base + k * l.inner] - mx);
      const double lse = mx + std::log(s);
      for (std::size_t k = 0; k < l.n; ++k) y[base + k * l.inner] = x[base + k * l.inner] - lse;
    }
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {ia}, [ia, l](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const Tensor& y = tp.value(self);
    const Tensor& g = tp.grad_ref(self);
    auto buf = tp.grad_buffer(ia);
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t i = 0; i < l.inner; ++i) {
        const std::size_t base = o * l.n * l.inner + i;
        double gs = 0.0;
        for (std::size_t k = 0; k < l.n; ++k) gs += g[base + k * l.inner];
        for (std::size_t k = 0; k < l.n; ++k) {
          const std::size_t j = base + k * l.inner;
          buf[j] += g[j] - std::exp(y[j]) * gs;
        }
      }
    }
  });
}

// ---- reductions ------------------------------------------------------------

Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.data()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(s), {ia}, [ia](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const double g = tp.grad_ref(self)[0];
    for (double& b : tp.grad_buffer(ia)) b += g;
  });
}

Var mean(Var a) {
  const std::size_t n = a.size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sum_axis(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  const AxisLayout l = layout(x.shape(), axis);
  Shape out = x.shape();
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor y(out);
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t k = 0; k < l.n; ++k)
      for (std::size_t i = 0; i < l.inner; ++i) y[o * l.inner + i] += x[(o * l.n + k) * l.inner + i];
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {ia}, [ia, l](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const Tensor& g = tp.grad_ref(self);
    auto buf = tp.grad_buffer(ia);
    for (std::size_t o = 0; o < l.outer; ++o)
      for (std::size_t k = 0; k < l.n; ++k)
        for (std::size_t i = 0; i < l.inner; ++i) buf[(o * l.n + k) * l.inner + i] += g[o * l.inner + i];
  });
}

Var l1_diff(Var a, Var b) { return sum(abs(sub(a, b))); }

// ---- structural ------------------------------------------------------------

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Tape& t = parts.front().tape();
  const Shape& s0 = parts.front().shape();
  if (axis >= s0.size()) throw ShapeError("concat axis out of range for " + to_string(s0));
  Shape out = s0;
  out[axis] = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> widths;  // per part, n * inner
  for (const Var& p : parts) {
    if (&p.tape() != &t) throw std::logic_error("operands recorded on different tapes");
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == s0[i];
    if (!ok) throw ShapeError("concat shape mismatch: " + to_string(s0) + " vs " + to_string(s));
    out[axis] += s[axis];
    ids.push_back(p.id());
  }
  const AxisLayout lo = layout(out, axis);
  for (const Var& p : parts) widths.push_back(p.shape()[axis] * lo.inner);
  const std::size_t row = lo.n * lo.inner;
  Tensor y(out);
  std::size_t off = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const Tensor& x = parts[pi].value();
    for (std::size_t o = 0; o < lo.outer; ++o)
      std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(o * widths[pi]), widths[pi],
                  y.data().begin() + static_cast<std::ptrdiff_t>(o * row + off));
    off += widths[pi];
  }
  return t.record(std::move(y), ids, [ids, widths, row, outer = lo.outer](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_ref(self);
    std::size_t off = 0;
    for (std::size_t pi = 0; pi < ids.size(); ++pi) {
      if (tp.requires_grad(ids[pi])) {
        auto buf = tp.grad_buffer(ids[pi]);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t j = 0; j < widths[pi]; ++j) buf[o * widths[pi] + j] += g[o * row + off + j];
      }
      off += widths[pi];
    }
  });
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  const AxisLayout l = layout(x.shape(), axis);
  if (begin > end || end > l.n) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for shape " + to_string(x.shape()));
  }
  Shape out = x.shape();
  out[axis] = end - begin;
  Tensor y(out);
  const std::size_t w = (end - begin) * l.inner;
  for (std::size_t o = 0; o < l.outer; ++o)
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>((o * l.n + begin) * l.inner), w,
                y.data().begin() + static_cast<std::ptrdiff_t>(o * w));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {ia}, [ia, l, begin, w](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const Tensor& g = tp.grad_ref(self);
    auto buf = tp.grad_buffer(ia);
    for (std::size_t o = 0; o < l.outer; ++o)
      for (std::size_t j = 0; j < w; ++j) buf[(o * l.n + begin) * l.inner + j] += g[o * w + j];
  });
}

Var reshape(Var a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("cannot reshape " + to_string(a.shape()) + " to " + to_string(shape));
  }
  std::vector<double> data(a.value().data().begin(), a.value().data().end());
  const std::size_t ia = a.id();
  return a.tape().record(Tensor(std::move(shape), std::move(data)), {ia},
                         [ia](Tape& tp, std::size_t self) { accumulate(tp, ia, tp.grad_ref(self).data()); });
}

}  // namespace pcsg::ad
