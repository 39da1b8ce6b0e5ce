#pragma once

// Dense 2-D tensors with a dynamic reverse-mode tape.
//
// A Tensor owns its value (and, for trainable weights, its gradient). A Tape
// records one forward pass as a topologically ordered list of nodes; Vars are
// cheap handles into it. The tape is rebuilt for every forward pass, so graphs
// whose shape depends on the sample (e.g. a per-sample step count) need no
// special handling.

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace acdiff {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

std::string shape_string(const Matrix& m);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false);

  std::vector<Index> shape() const { return {value_.rows(), value_.cols()}; }
  Index rows() const { return value_.rows(); }
  Index cols() const { return value_.cols(); }
  Index size() const { return value_.size(); }

  const Matrix& value() const { return value_; }
  Matrix& value() { return value_; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  bool has_grad() const { return grad_.has_value(); }
  const Matrix& grad() const;
  void zero_grad();
  void accumulate_grad(const Matrix& g);

 private:
  Matrix value_;
  bool requires_grad_ = false;
  std::optional<Matrix> grad_;
};

enum class OpId {
  param,
  constant,
  add,
  sub,
  mul,
  matmul,
  sigmoid,
  silu,
  square,
  sqrt,
  mean,
  sum,
  scale,
  affine,
  concat,
  add_bias,
  scale_rows,
  gather_rows,
  map,
};

const char* op_name(OpId op);

class Tape;

/// Handle to one node of a Tape. Valid for the lifetime of the tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double item() const;
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradient rule: receives the upstream gradient of the node and one slot per
/// input (nullptr when that input does not need a gradient).
using BackwardFn = std::function<void(const Matrix& upstream, std::span<Matrix* const> input_grads)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf bound to a tensor; when the tensor requires grad, backward()
  /// accumulates into tensor.grad(). The tensor must outlive the tape and
  /// keep its value until backward() returns.
  Var param(Tensor& tensor);
  /// Read-only leaf over a tensor; never receives a gradient.
  Var param(const Tensor& tensor);
  /// Leaf that never receives a gradient.
  Var constant(Matrix value);
  Var constant(double value);

  /// Reverse sweep from a 1x1 loss. Parameter gradients accumulate across
  /// calls; call Tensor::zero_grad() to reset.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  OpId op(std::size_t id) const { return nodes_.at(id).op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
  const Matrix& value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.external != nullptr ? *n.external : n.value;
  }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Appends a node. Used by the op implementations; `backward` may be empty
  /// when no input requires grad.
  Var record(OpId op, std::vector<std::size_t> inputs, Matrix value, BackwardFn backward);

 private:
  struct Node {
    OpId op;
    std::vector<std::size_t> inputs;
    Matrix value;
    bool requires_grad = false;
    Tensor* bound = nullptr;
    const Matrix* external = nullptr;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Elementwise binary ops; operands must have identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

Var matmul(Var a, Var b);

Var sigmoid(Var a);
/// x * sigmoid(x)
Var silu(Var a);
Var square(Var a);
/// Requires all entries >= 0.
Var sqrt(Var a);

/// Sequential row-major reductions to a 1x1 node.
Var sum(Var a);
Var mean(Var a);

Var scale(Var a, double factor);
/// factor * a + shift
Var affine(Var a, double factor, double shift);

/// Column-wise concatenation [a, b]; row counts must match.
Var concat(Var a, Var b);
/// a (B x N) + bias (1 x N) broadcast over rows.
Var add_bias(Var a, Var bias);
/// a (B x N) with row i multiplied by s(i, 0); s is B x 1.
Var scale_rows(Var a, Var s);
/// Rows of `table` selected by `indices`.
Var gather_rows(Var table, std::span<const int> indices);
/// Elementwise function whose values and local derivatives were computed
/// outside the tape: out = values, d out / d a = derivs (same shape as a).
Var map(Var a, Matrix values, Matrix derivs);

/// Scalar loss built on a fresh tape.
using LossFn = std::function<Var(Tape&)>;

/// Max relative error between tape gradients and central finite differences
/// over every entry of `params`. Relative error is
/// |g - fd| / max(|g|, |fd|, 1e-5). `f` must be deterministic.
double grad_check(const LossFn& f, std::span<Tensor* const> params, double eps = 1e-5);

}  // namespace acdiff
