#include "acdiff/numerics.hpp"

#include "acdiff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace acdiff {

namespace {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw NumericError(std::string(what) + ": non-finite value " + shape_string(m));
  }
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.value()) + " vs " +
                         shape_string(b.value()));
  }
}

Matrix sigmoid_of(const Matrix& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

double sequential_sum(const Matrix& m) {
  double acc = 0.0;
  const double* p = m.data();
  for (Index i = 0; i < m.size(); ++i) acc += p[i];
  return acc;
}

}  // namespace

std::string shape_string(const Matrix& m) {
  std::ostringstream os;
  os << '[' << m.rows() << 'x' << m.cols() << ']';
  return os.str();
}

Tensor::Tensor(Matrix value, bool requires_grad)
    : value_(std::move(value)), requires_grad_(requires_grad) {}

Tensor Tensor::zeros(Index rows, Index cols, bool requires_grad) {
  return Tensor(Matrix::Zero(rows, cols), requires_grad);
}

const Matrix& Tensor::grad() const {
  if (!grad_) throw ContractError("tensor has no gradient buffer");
  return *grad_;
}

void Tensor::zero_grad() { grad_ = Matrix::Zero(value_.rows(), value_.cols()); }

void Tensor::accumulate_grad(const Matrix& g) {
  if (g.rows() != value_.rows() || g.cols() != value_.cols()) {
    throw DimensionError("gradient shape " + shape_string(g) + " does not match tensor " +
                         shape_string(value_));
  }
  if (!grad_) {
    grad_ = g;
  } else {
    *grad_ += g;
  }
}

const char* op_name(OpId op) {
  switch (op) {
    case OpId::param: return "param";
    case OpId::constant: return "constant";
    case OpId::add: return "add";
    case OpId::sub: return "sub";
    case OpId::mul: return "mul";
    case OpId::matmul: return "matmul";
    case OpId::sigmoid: return "sigmoid";
    case OpId::silu: return "silu";
    case OpId::square: return "square";
    case OpId::sqrt: return "sqrt";
    case OpId::mean: return "mean";
    case OpId::sum: return "sum";
    case OpId::scale: return "scale";
    case OpId::affine: return "affine";
    case OpId::concat: return "concat";
    case OpId::add_bias: return "add_bias";
    case OpId::scale_rows: return "scale_rows";
    case OpId::gather_rows: return "gather_rows";
    case OpId::map: return "map";
  }
  return "?";
}

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ContractError("item() on non-scalar " + shape_string(v));
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::param(Tensor& tensor) {
  require_finite(tensor.value(), "param");
  nodes_.push_back(Node{OpId::param, {}, {}, tensor.requires_grad(), &tensor, &tensor.value(), {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const Tensor& tensor) {
  require_finite(tensor.value(), "param");
  nodes_.push_back(Node{OpId::param, {}, {}, false, nullptr, &tensor.value(), {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  require_finite(value, "constant");
  nodes_.push_back(Node{OpId::constant, {}, std::move(value), false, nullptr, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::record(OpId op, std::vector<std::size_t> inputs, Matrix value, BackwardFn backward) {
  require_finite(value, op_name(op));
  bool needs = std::any_of(inputs.begin(), inputs.end(),
                           [this](std::size_t i) { return nodes_.at(i).requires_grad; });
  Node node{op, std::move(inputs), std::move(value), needs, nullptr, nullptr, {}};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ContractError("backward: loss belongs to a different tape");
  const std::size_t root = loss.id();
  const Node& root_node = nodes_.at(root);
  if (value(root).size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_string(value(root)));
  }
  if (!root_node.requires_grad) {
    throw ContractError("backward: loss does not depend on any tensor that requires grad");
  }

  std::vector<Matrix> grads(root + 1);
  grads[root] = Matrix::Ones(1, 1);
  std::vector<Matrix*> slots;
  for (std::size_t i = root + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || grads[i].size() == 0) continue;
    if (node.bound != nullptr) {
      node.bound->accumulate_grad(grads[i]);
      continue;
    }
    if (!node.backward) continue;
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (grads[in].size() == 0) grads[in] = Matrix::Zero(value(in).rows(), value(in).cols());
      slots[k] = &grads[in];
    }
    node.backward(grads[i], slots);
  }
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  return a.tape().record(OpId::add, {a.id(), b.id()}, a.value() + b.value(),
                         [](const Matrix& g, std::span<Matrix* const> out) {
                           if (out[0]) *out[0] += g;
                           if (out[1]) *out[1] += g;
                         });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  return a.tape().record(OpId::sub, {a.id(), b.id()}, a.value() - b.value(),
                         [](const Matrix& g, std::span<Matrix* const> out) {
                           if (out[0]) *out[0] += g;
                           if (out[1]) *out[1] -= g;
                         });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tape* tape = &a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return tape->record(OpId::mul, {ia, ib}, a.value().cwiseProduct(b.value()),
                      [tape, ia, ib](const Matrix& g, std::span<Matrix* const> out) {
                        if (out[0]) *out[0] += g.cwiseProduct(tape->value(ib));
                        if (out[1]) *out[1] += g.cwiseProduct(tape->value(ia));
                      });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: shape mismatch " + shape_string(a.value()) + " vs " +
                         shape_string(b.value()));
  }
  Tape* tape = &a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  Matrix value = a.value() * b.value();
  return tape->record(OpId::matmul, {ia, ib}, std::move(value),
                      [tape, ia, ib](const Matrix& g, std::span<Matrix* const> out) {
                        if (out[0]) out[0]->noalias() += g * tape->value(ib).transpose();
                        if (out[1]) out[1]->noalias() += tape->value(ia).transpose() * g;
                      });
}

Var sigmoid(Var a) {
  Tape* tape = &a.tape();
  const std::size_t self = tape->size();
  return tape->record(OpId::sigmoid, {a.id()}, sigmoid_of(a.value()),
                      [tape, self](const Matrix& g, std::span<Matrix* const> out) {
                        const Matrix& s = tape->value(self);
                        *out[0] += g.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix()));
                      });
}

Var silu(Var a) {
  Tape* tape = &a.tape();
  const std::size_t ia = a.id();
  Matrix s = sigmoid_of(a.value());
  Matrix value = a.value().cwiseProduct(s);
  return tape->record(OpId::silu, {ia}, std::move(value),
                      [tape, ia, s = std::move(s)](const Matrix& g, std::span<Matrix* const> out) {
                        const Matrix& x = tape->value(ia);
                        // d/dx x*s(x) = s + x*s*(1-s)
                        Matrix local = (s.array() + x.array() * s.array() * (1.0 - s.array())).matrix();
                        *out[0] += g.cwiseProduct(local);
                      });
}

Var square(Var a) {
  Tape* tape = &a.tape();
  const std::size_t ia = a.id();
  return tape->record(OpId::square, {ia}, a.value().cwiseProduct(a.value()),
                      [tape, ia](const Matrix& g, std::span<Matrix* const> out) {
                        *out[0] += 2.0 * g.cwiseProduct(tape->value(ia));
                      });
}

Var sqrt(Var a) {
  if ((a.value().array() < 0.0).any()) {
    throw NumericError("sqrt: negative input " + shape_string(a.value()));
  }
  Tape* tape = &a.tape();
  const std::size_t self = tape->size();
  return tape->record(OpId::sqrt, {a.id()}, a.value().cwiseSqrt(),
                      [tape, self](const Matrix& g, std::span<Matrix* const> out) {
                        const Matrix& r = tape->value(self);
                        *out[0] += (0.5 * g.array() / r.array()).matrix();
                      });
}

Var sum(Var a) {
  return a.tape().record(OpId::sum, {a.id()}, Matrix::Constant(1, 1, sequential_sum(a.value())),
                         [](const Matrix& g, std::span<Matrix* const> out) {
                           out[0]->array() += g(0, 0);
                         });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ContractError("mean: empty tensor");
  return a.tape().record(OpId::mean, {a.id()}, Matrix::Constant(1, 1, sequential_sum(a.value()) / n),
                         [n](const Matrix& g, std::span<Matrix* const> out) {
                           out[0]->array() += g(0, 0) / n;
                         });
}

Var scale(Var a, double factor) {
  return a.tape().record(OpId::scale, {a.id()}, factor * a.value(),
                         [factor](const Matrix& g, std::span<Matrix* const> out) {
                           *out[0] += factor * g;
                         });
}

Var affine(Var a, double factor, double shift) {
  Matrix value = (factor * a.value().array() + shift).matrix();
  return a.tape().record(OpId::affine, {a.id()}, std::move(value),
                         [factor](const Matrix& g, std::span<Matrix* const> out) {
                           *out[0] += factor * g;
                         });
}

Var concat(Var a, Var b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("concat: row mismatch " + shape_string(a.value()) + " vs " +
                         shape_string(b.value()));
  }
  const Index ca = a.cols(), cb = b.cols();
  Matrix value(a.rows(), ca + cb);
  value << a.value(), b.value();
  return a.tape().record(OpId::concat, {a.id(), b.id()}, std::move(value),
                         [ca, cb](const Matrix& g, std::span<Matrix* const> out) {
                           if (out[0]) *out[0] += g.leftCols(ca);
                           if (out[1]) *out[1] += g.rightCols(cb);
                         });
}

Var add_bias(Var a, Var bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw DimensionError("add_bias: shape mismatch " + shape_string(a.value()) + " vs " +
                         shape_string(bias.value()));
  }
  Matrix value = a.value().rowwise() + bias.value().row(0);
  return a.tape().record(OpId::add_bias, {a.id(), bias.id()}, std::move(value),
                         [](const Matrix& g, std::span<Matrix* const> out) {
                           if (out[0]) *out[0] += g;
                           if (out[1]) *out[1] += g.colwise().sum();
                         });
}

Var scale_rows(Var a, Var s) {
  if (s.cols() != 1 || s.rows() != a.rows()) {
    throw DimensionError("scale_rows: shape mismatch " + shape_string(a.value()) + " vs " +
                         shape_string(s.value()));
  }
  Tape* tape = &a.tape();
  const std::size_t ia = a.id(), is = s.id();
  Matrix value = s.value().col(0).asDiagonal() * a.value();
  return tape->record(OpId::scale_rows, {ia, is}, std::move(value),
                      [tape, ia, is](const Matrix& g, std::span<Matrix* const> out) {
                        if (out[0]) *out[0] += tape->value(is).col(0).asDiagonal() * g;
                        if (out[1]) out[1]->col(0) += g.cwiseProduct(tape->value(ia)).rowwise().sum();
                      });
}

Var gather_rows(Var table, std::span<const int> indices) {
  const Index n = table.rows();
  Matrix value(static_cast<Index>(indices.size()), table.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] < 0 || indices[r] >= n) {
      throw ContractError("gather_rows: index " + std::to_string(indices[r]) + " outside [0, " +
                          std::to_string(n) + ")");
    }
    value.row(static_cast<Index>(r)) = table.value().row(indices[r]);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return table.tape().record(OpId::gather_rows, {table.id()}, std::move(value),
                             [idx = std::move(idx)](const Matrix& g, std::span<Matrix* const> out) {
                               for (std::size_t r = 0; r < idx.size(); ++r) {
                                 out[0]->row(idx[r]) += g.row(static_cast<Index>(r));
                               }
                             });
}

Var map(Var a, Matrix values, Matrix derivs) {
  if (values.rows() != a.rows() || values.cols() != a.cols() || derivs.rows() != a.rows() ||
      derivs.cols() != a.cols()) {
    throw DimensionError("map: shape mismatch " + shape_string(a.value()) + " vs " +
                         shape_string(values) + "/" + shape_string(derivs));
  }
  require_finite(derivs, "map derivative");
  return a.tape().record(OpId::map, {a.id()}, std::move(values),
                         [d = std::move(derivs)](const Matrix& g, std::span<Matrix* const> out) {
                           *out[0] += g.cwiseProduct(d);
                         });
}

double grad_check(const LossFn& f, std::span<Tensor* const> params, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw ContractError("grad_check: eps must lie in [1e-7, 1e-3]");
  }
  auto evaluate = [&f]() {
    Tape tape;
    return f(tape).item();
  };

  for (Tensor* p : params) p->zero_grad();
  double base = 0.0;
  {
    Tape tape;
    Var loss = f(tape);
    base = loss.item();
    if (loss.requires_grad()) tape.backward(loss);
  }
  if (evaluate() != base) {
    throw ContractError("grad_check: loss function is not deterministic");
  }

  double worst = 0.0;
  for (Tensor* p : params) {
    const Matrix analytic = p->grad();
    Matrix& v = p->value();
    for (Index i = 0; i < v.size(); ++i) {
      const double saved = v.data()[i];
      v.data()[i] = saved + eps;
      const double up = evaluate();
      v.data()[i] = saved - eps;
      const double down = evaluate();
      v.data()[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double g = analytic.data()[i];
      const double denom = std::max({std::abs(g), std::abs(fd), 1e-5});
      worst = std::max(worst, std::abs(g - fd) / denom);
    }
  }
  return worst;
}

}  // namespace acdiff
