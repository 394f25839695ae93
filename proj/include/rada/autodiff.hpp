#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "rada/tensor.hpp"

namespace rada::ad {

enum class OpKind {
  Constant,
  Parameter,
  MatMul,
  AddBias,
  Add,
  Scale,
  Affine,
  Relu,
  Sigmoid,
  Exp,
  LogSoftmax,
  ClampedLog,
  ConcatRows,
  OuterFlatten,
  ReduceMean,
  WeightedSum,
  Pick,
  GatherRows,
  ScaleRows,
  GradReverse,
};

std::string_view op_name(OpKind kind);

/// Handle to a node of a Graph. Only meaningful together with the graph
/// that produced it.
struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
  bool valid() const { return id != std::numeric_limits<std::size_t>::max(); }
};

/// Define-by-run tape. Nodes are appended in evaluation order, so node ids
/// are a topological order and backward() is a single reverse sweep.
///
/// An op whose inputs are all constants (or any op on a graph built with
/// grad disabled) is recorded as a Constant leaf holding only its value.
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor value);
  /// Trainable leaf. Parameters are numbered in creation order; that ordinal
  /// keys the gradient list returned by backward().
  Var parameter(Tensor value);
  Var detach(Var x);

  Var matmul(Var a, Var b);
  /// x [n, m] + bias [m] broadcast over rows.
  Var add_bias(Var x, Var bias);
  Var add(Var a, Var b);
  Var scale(Var x, double c);
  /// a * x + b elementwise.
  Var affine(Var x, double a, double b);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var exp(Var x);
  /// Row-wise log-softmax of a matrix.
  Var log_softmax(Var x);
  /// log(clamp(x, eps, 1 - eps)). Zero gradient where the clamp is active.
  Var clamped_log(Var x, double eps);
  Var concat_rows(std::span<const Var> parts);
  /// Row-wise outer product a[i] (x) b[i], flattened with a's index major:
  /// out[i, j * b.cols + k] = a[i, j] * b[i, k].
  Var outer_flatten(Var a, Var b);
  Var reduce_mean(Var x);
  /// sum_i w_i x_i with constant weights; returns a scalar.
  Var weighted_sum(Var x, std::vector<double> weights);
  /// out[i] = x[i, cols[i]] for a matrix x.
  Var pick(Var x, std::vector<std::size_t> cols);
  Var gather_rows(Var x, std::vector<std::size_t> rows);
  /// out[i, :] = coeffs[i] * x[i, :] with constant coefficients.
  Var scale_rows(Var x, std::vector<double> coeffs);
  /// Identity forward; backward multiplies the upstream gradient by -lambda.
  Var gradient_reversal(Var x, double lambda);

  const Tensor& value(Var v) const { return node(v).value; }
  /// Gradient accumulated by the last backward(); zeros if none reached v.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  OpKind kind(Var v) const { return node(v).kind; }
  std::span<const std::size_t> inputs(Var v) const { return node(v).inputs; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t parameter_count() const { return parameters_.size(); }
  Var parameter_var(std::size_t ordinal) const { return {parameters_.at(ordinal)}; }

  /// Reverse sweep from a scalar loss. Returns d(loss)/d(parameter) for every
  /// parameter in creation order; parameters off the loss path get zeros.
  std::vector<Tensor> backward(Var loss);

 private:
  struct Node {
    OpKind kind = OpKind::Constant;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    double a = 0.0;
    double b = 0.0;
    std::vector<double> coeffs;
    std::vector<std::size_t> indices;
  };

  const Node& node(Var v) const;
  Var record(Node n);
  bool any_requires_grad(std::initializer_list<Var> vs) const;
  void accumulate(std::size_t id, std::span<const double> g);
  Tensor& grad_buffer(std::size_t id);
  void backprop_node(std::size_t id);

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::vector<std::size_t> parameters_;
};

}  // namespace rada::ad
