#pragma once

// Reverse-mode automatic differentiation over dense row-major float64 tensors.
//
// A Tensor is a plain value. A Tape records every operation applied to Vars
// (handles into the tape) together with a backward closure; Tape::backward
// replays them in reverse creation order, which is a valid reverse
// topological order since operands always precede results.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcsg::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string to_string(const Shape& s);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double item() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  double item() const { return value().item(); }
  Tape& tape() const;
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A leaf that receives a gradient (parameters, attacked inputs).
  Var leaf(Tensor value);
  /// A leaf that never receives a gradient.
  Var constant(Tensor value);

  /// Computes d(loss)/d(node) for every node that depends on a leaf.
  /// Throws if loss is not a scalar or backward was already run.
  void backward(Var loss);

  /// Gradient of the last backward pass; zeros if nothing flowed into v.
  Tensor grad(Var v) const;

  std::size_t node_count() const { return nodes_.size(); }

  // Recording interface used by the operation implementations.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;
  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn fn);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad_ref(std::size_t id) const { return nodes_[id].grad; }
  /// Accumulation buffer of node id, allocated on first use.
  std::span<double> grad_buffer(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ---- primitives -----------------------------------------------------------
// Elementwise binary ops require equal shapes, except that either operand may
// hold exactly one element (scalar-tensor broadcast).

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_scalar(Var a, double s);
Var scale(Var a, double s);
/// a[m, n] + bias[n] on every row.
Var add_bias(Var a, Var bias);

Var matmul(Var a, Var b);
Var transpose(Var a);

Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var sin(Var a);
Var abs(Var a);
/// Square root with zero subgradient at 0.
Var sqrt(Var a);
/// max(a, threshold) elementwise; gradient passes only where a > threshold.
Var max_with_scalar(Var a, double threshold);
/// Gradient passes only strictly inside (lo, hi).
Var clamp(Var a, double lo, double hi);

Var softmax(Var a, std::size_t axis);
Var log_softmax(Var a, std::size_t axis);

Var sum(Var a);
Var mean(Var a);
Var sum_axis(Var a, std::size_t axis);
/// sum |a - b| over all elements.
Var l1_diff(Var a, Var b);

Var concat(std::span<const Var> parts, std::size_t axis);
Var concat(std::initializer_list<Var> parts, std::size_t axis);
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
Var reshape(Var a, Shape shape);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace pcsg::ad
