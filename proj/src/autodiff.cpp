#include "rada/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rada::ad {

namespace {

[[noreturn]] void shape_error(OpKind kind, const std::string& detail) {
  throw std::invalid_argument(std::string(op_name(kind)) + ": " + detail);
}

void require_matrix(OpKind kind, const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    shape_error(kind, std::string(what) + " must be a matrix, got shape " +
                          to_string(t.shape()));
  }
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Constant: return "constant";
    case OpKind::Parameter: return "parameter";
    case OpKind::MatMul: return "matmul";
    case OpKind::AddBias: return "add_bias";
    case OpKind::Add: return "add";
    case OpKind::Scale: return "scale";
    case OpKind::Affine: return "affine";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Exp: return "exp";
    case OpKind::LogSoftmax: return "log_softmax";
    case OpKind::ClampedLog: return "clamped_log";
    case OpKind::ConcatRows: return "concat_rows";
    case OpKind::OuterFlatten: return "outer_flatten";
    case OpKind::ReduceMean: return "reduce_mean";
    case OpKind::WeightedSum: return "weighted_sum";
    case OpKind::Pick: return "pick";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::ScaleRows: return "scale_rows";
    case OpKind::GradReverse: return "gradient_reversal";
  }
  return "unknown";
}

const Graph::Node& Graph::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) {
    throw std::out_of_range("variable does not belong to this graph");
  }
  return nodes_[v.id];
}

bool Graph::any_requires_grad(std::initializer_list<Var> vs) const {
  if (!grad_enabled_) return false;
  return std::any_of(vs.begin(), vs.end(),
                     [&](Var v) { return node(v).requires_grad; });
}

Var Graph::record(Node n) {
  if (!n.requires_grad) {
    // Nothing upstream is trainable: keep the value, drop the edges.
    Node c;
    c.kind = OpKind::Constant;
    c.value = std::move(n.value);
    n = std::move(c);
  }
  nodes_.push_back(std::move(n));
  return {nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
  Node n;
  n.kind = OpKind::Constant;
  n.value = std::move(value);
  return record(std::move(n));
}

Var Graph::parameter(Tensor value) {
  if (!grad_enabled_) return constant(std::move(value));
  Node n;
  n.kind = OpKind::Parameter;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  parameters_.push_back(nodes_.size() - 1);
  return {nodes_.size() - 1};
}

Var Graph::detach(Var x) { return constant(value(x)); }

Var Graph::matmul(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  require_matrix(OpKind::MatMul, A, "left operand");
  require_matrix(OpKind::MatMul, B, "right operand");
  if (A.cols() != B.rows()) {
    shape_error(OpKind::MatMul, "inner dimensions differ: " +
                                    to_string(A.shape()) + " x " +
                                    to_string(B.shape()));
  }
  const std::size_t n = A.rows(), k = A.cols(), m = B.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.row(i).data();
    const double* ai = A.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* brow = B.row(p).data();
      for (std::size_t j = 0; j < m; ++j) o[j] += aip * brow[j];
    }
  }
  Node nd;
  nd.kind = OpKind::MatMul;
  nd.inputs = {a.id, b.id};
  nd.value = std::move(out);
  nd.requires_grad = any_requires_grad({a, b});
  return record(std::move(nd));
}

Var Graph::add_bias(Var x, Var bias) {
  const auto& X = value(x);
  const auto& B = value(bias);
  require_matrix(OpKind::AddBias, X, "input");
  if (B.numel() != X.cols()) {
    shape_error(OpKind::AddBias, "bias of shape " + to_string(B.shape()) +
                                     " does not match input " +
                                     to_string(X.shape()));
  }
  Tensor out = X;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += B[j];
  }
  Node nd;
  nd.kind = OpKind::AddBias;
  nd.inputs = {x.id, bias.id};
  nd.value = std::move(out);
  nd.requires_grad = any_requires_grad({x, bias});
  return record(std::move(nd));
}

Var Graph::add(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.shape() != B.shape()) {
    shape_error(OpKind::Add, "shapes differ: " + to_string(A.shape()) +
                                 " vs " + to_string(B.shape()));
  }
  Tensor out = A;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += B[i];
  Node nd;
  nd.kind = OpKind::Add;
  nd.inputs = {a.id, b.id};
  nd.value = std::move(out);
  nd.requires_grad = any_requires_grad({a, b});
  return record(std::move(nd));
}

Var Graph::scale(Var x, double c) {
  Tensor out = value(x);
  for (auto& v : out.raw()) v *= c;
  Node nd;
  nd.kind = OpKind::Scale;
  nd.inputs = {x.id};
  nd.value = std::move(out);
  nd.a = c;
  nd.requires_grad = any_requires_grad({x});
  return record(std::move(nd));
}

Var Graph::affine(Var x, double a, double b) {
  Tensor out = value(x);
  for (auto& v : out.raw()) v = a * v + b;
  Node nd;
  nd.kind = OpKind::Affine;
  nd.inputs = {x.id};
  nd.value = std::move(out);
  nd.a = a;
  nd.b = b;
  nd.requires_grad = any_requires_grad({x});
  return record(std::move(nd));
}

Var Graph::relu(Var x) {
  Tensor out = value(x);
  for (auto& v : out.raw()) v = v > 0.0 ? v : 0.0;
  Node nd;
  nd.kind = OpKind::Relu;
  nd.inputs = {x.id};
  nd.value = std::move(out);
  nd.requires_grad = any_requires_grad({x});
  return record(std::move(nd));
}

Var Graph::sigmoid(Var x) {
  Tensor out = value(x);
  for (auto& v : out.raw()) {
    // Split on sign so exp never overflows.
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  Node nd;
  nd.kind = OpKind::Sigmoid;
  nd.inputs = {x.id};
  nd.value = std::move(out);
  nd.requires_grad = any_requires_grad({x});
  return record(std::move(nd));
}

Var Graph::exp(Var x) {
  Tensor out = value(x);
  for (auto& v : out.raw()) v = std::exp(v);
  Node nd;
  nd.kind = OpKind::Exp;
  nd.inputs = {x.id};
  nd.value = std::move(out);
  nd.requires_grad = any_requires_grad({x});
  return record(std::move(nd));
}

Var Graph::log_softmax(Var x) {
  const auto& X = value(x);
  require_matrix(OpKind::LogSoftmax, X, "input");
  Tensor out = X;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    auto r = out.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double sum = 0.0;
    for (double v : r) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    for (auto& v : r) v -= lse;
  }
  Node nd;
  nd.kind = OpKind::LogSoftmax;
  nd.inputs = {x.id};
  nd.value = std::move(out);
  nd.requires_grad = any_requires_grad({x});
  return record(std::move(nd));
}

Var Graph::clamped_log(Var x, double eps) {
  if (!(eps > 0.0 && eps < 0.5)) {
    shape_error(OpKind::ClampedLog, "eps must lie in (0, 0.5)");
  }
  Tensor out = value(x);
  for (auto& v : out.raw()) v = std::log(std::clamp(v, eps, 1.0 - eps));
  Node nd;
  nd.kind = OpKind::ClampedLog;
  nd.inputs = {x.id};
  nd.value = std::move(out);
  nd.a = eps;
  nd.requires_grad = any_requires_grad({x});
  return record(std::move(nd));
}

Var Graph::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) shape_error(OpKind::ConcatRows, "no inputs");
  const std::size_t cols = value(parts[0]).cols();
  std::size_t rows = 0;
  bool rg = false;
  for (Var p : parts) {
    const auto& P = value(p);
    require_matrix(OpKind::ConcatRows, P, "input");
    if (P.cols() != cols) {
      shape_error(OpKind::ConcatRows,
                  "column counts differ: " + to_string(value(parts[0]).shape()) +
                      " vs " + to_string(P.shape()));
    }
    rows += P.rows();
    rg = rg || any_requires_grad({p});
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  Node nd;
  for (Var p : parts) {
    const auto& P = value(p).raw();
    data.insert(data.end(), P.begin(), P.end());
    nd.inputs.push_back(p.id);
  }
  nd.kind = OpKind::ConcatRows;
  nd.value = Tensor({rows, cols}, std::move(data));
  nd.requires_grad = rg;
  return record(std::move(nd));
}

Var Graph::outer_flatten(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  require_matrix(OpKind::OuterFlatten, A, "left operand");
  require_matrix(OpKind::OuterFlatten, B, "right operand");
  if (A.rows() != B.rows()) {
    shape_error(OpKind::OuterFlatten, "row counts differ: " +
                                          to_string(A.shape()) + " vs " +
                                          to_string(B.shape()));
  }
  const std::size_t n = A.rows(), da = A.cols(), db = B.cols();
  Tensor out({n, da * db});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < da; ++j) {
      for (std::size_t k = 0; k < db; ++k) {
        out.at(i, j * db + k) = A.at(i, j) * B.at(i, k);
      }
    }
  }
  Node nd;
  nd.kind = OpKind::OuterFlatten;
  nd.inputs = {a.id, b.id};
  nd.value = std::move(out);
  nd.requires_grad = any_requires_grad({a, b});
  return record(std::move(nd));
}

Var Graph::reduce_mean(Var x) {
  const auto& X = value(x);
  double s = 0.0;
  for (double v : X.raw()) s += v;
  Node nd;
  nd.kind = OpKind::ReduceMean;
  nd.inputs = {x.id};
  nd.value = Tensor::scalar(s / static_cast<double>(X.numel()));
  nd.requires_grad = any_requires_grad({x});
  return record(std::move(nd));
}

Var Graph::weighted_sum(Var x, std::vector<double> weights) {
  const auto& X = value(x);
  if (weights.size() != X.numel()) {
    shape_error(OpKind::WeightedSum,
                std::to_string(weights.size()) + " weights for input of shape " +
                    to_string(X.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * X[i];
  Node nd;
  nd.kind = OpKind::WeightedSum;
  nd.inputs = {x.id};
  nd.value = Tensor::scalar(s);
  nd.coeffs = std::move(weights);
  nd.requires_grad = any_requires_grad({x});
  return record(std::move(nd));
}

Var Graph::pick(Var x, std::vector<std::size_t> cols) {
  const auto& X = value(x);
  require_matrix(OpKind::Pick, X, "input");
  if (cols.size() != X.rows()) {
    shape_error(OpKind::Pick, std::to_string(cols.size()) +
                                  " indices for input of shape " +
                                  to_string(X.shape()));
  }
  std::vector<double> out(cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] >= X.cols()) {
      shape_error(OpKind::Pick, "column index " + std::to_string(cols[i]) +
                                    " out of range for shape " +
                                    to_string(X.shape()));
    }
    out[i] = X.at(i, cols[i]);
  }
  Node nd;
  nd.kind = OpKind::Pick;
  nd.inputs = {x.id};
  nd.value = Tensor::vector(std::move(out));
  nd.indices = std::move(cols);
  nd.requires_grad = any_requires_grad({x});
  return record(std::move(nd));
}

Var Graph::gather_rows(Var x, std::vector<std::size_t> rows) {
  const auto& X = value(x);
  require_matrix(OpKind::GatherRows, X, "input");
  if (rows.empty()) shape_error(OpKind::GatherRows, "empty row selection");
  std::vector<double> out;
  out.reserve(rows.size() * X.cols());
  for (auto r : rows) {
    if (r >= X.rows()) {
      shape_error(OpKind::GatherRows, "row index " + std::to_string(r) +
                                          " out of range for shape " +
                                          to_string(X.shape()));
    }
    auto src = X.row(r);
    out.insert(out.end(), src.begin(), src.end());
  }
  Node nd;
  nd.kind = OpKind::GatherRows;
  nd.inputs = {x.id};
  nd.value = Tensor({rows.size(), X.cols()}, std::move(out));
  nd.indices = std::move(rows);
  nd.requires_grad = any_requires_grad({x});
  return record(std::move(nd));
}

Var Graph::scale_rows(Var x, std::vector<double> coeffs) {
  const auto& X = value(x);
  require_matrix(OpKind::ScaleRows, X, "input");
  if (coeffs.size() != X.rows()) {
    shape_error(OpKind::ScaleRows, std::to_string(coeffs.size()) +
                                       " coefficients for input of shape " +
                                       to_string(X.shape()));
  }
  Tensor out = X;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    for (auto& v : out.row(i)) v *= coeffs[i];
  }
  Node nd;
  nd.kind = OpKind::ScaleRows;
  nd.inputs = {x.id};
  nd.value = std::move(out);
  nd.coeffs = std::move(coeffs);
  nd.requires_grad = any_requires_grad({x});
  return record(std::move(nd));
}

Var Graph::gradient_reversal(Var x, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    shape_error(OpKind::GradReverse, "lambda must be finite and nonnegative");
  }
  Node nd;
  nd.kind = OpKind::GradReverse;
  nd.inputs = {x.id};
  nd.value = value(x);
  nd.a = lambda;
  nd.requires_grad = any_requires_grad({x});
  return record(std::move(nd));
}

Tensor Graph::grad(Var v) const {
  const auto& n = node(v);
  if (n.has_grad) return n.grad;
  return Tensor(n.value.shape(), 0.0);
}

Tensor& Graph::grad_buffer(std::size_t id) {
  auto& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

void Graph::accumulate(std::size_t id, std::span<const double> g) {
  if (!nodes_[id].requires_grad) return;
  auto& buf = grad_buffer(id).raw();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

std::vector<Tensor> Graph::backward(Var loss) {
  const auto& L = node(loss);
  if (L.value.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                to_string(L.value.shape()));
  }
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  if (L.requires_grad) {
    grad_buffer(loss.id)[0] = 1.0;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      if (nodes_[id].has_grad && nodes_[id].requires_grad) backprop_node(id);
    }
  }
  std::vector<Tensor> grads;
  grads.reserve(parameters_.size());
  for (auto pid : parameters_) grads.push_back(grad(Var{pid}));
  return grads;
}

void Graph::backprop_node(std::size_t id) {
  // References into nodes_ stay valid: backward never appends nodes.
  const Node& n = nodes_[id];
  const Tensor& G = n.grad;
  const Tensor& Y = n.value;

  switch (n.kind) {
    case OpKind::Constant:
    case OpKind::Parameter:
      return;

    case OpKind::MatMul: {
      const std::size_t ia = n.inputs[0], ib = n.inputs[1];
      const Tensor& A = nodes_[ia].value;
      const Tensor& B = nodes_[ib].value;
      const std::size_t rows = A.rows(), k = A.cols(), m = B.cols();
      if (nodes_[ia].requires_grad) {
        Tensor& dA = grad_buffer(ia);
        for (std::size_t i = 0; i < rows; ++i) {
          const double* gi = G.row(i).data();
          double* dai = dA.row(i).data();
          for (std::size_t p = 0; p < k; ++p) {
            const double* bp = B.row(p).data();
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += gi[j] * bp[j];
            dai[p] += s;
          }
        }
      }
      if (nodes_[ib].requires_grad) {
        Tensor& dB = grad_buffer(ib);
        for (std::size_t i = 0; i < rows; ++i) {
          const double* ai = A.row(i).data();
          const double* gi = G.row(i).data();
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            double* dbp = dB.row(p).data();
            for (std::size_t j = 0; j < m; ++j) dbp[j] += aip * gi[j];
          }
        }
      }
      return;
    }

    case OpKind::AddBias: {
      accumulate(n.inputs[0], G.raw());
      const std::size_t ib = n.inputs[1];
      if (nodes_[ib].requires_grad) {
        Tensor& dB = grad_buffer(ib);
        for (std::size_t i = 0; i < G.rows(); ++i) {
          auto r = G.row(i);
          for (std::size_t j = 0; j < r.size(); ++j) dB[j] += r[j];
        }
      }
      return;
    }

    case OpKind::Add:
      accumulate(n.inputs[0], G.raw());
      accumulate(n.inputs[1], G.raw());
      return;

    case OpKind::Scale:
    case OpKind::Affine:
    case OpKind::GradReverse: {
      const double factor = n.kind == OpKind::GradReverse ? -n.a : n.a;
      std::vector<double> g(G.numel());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = factor * G[i];
      accumulate(n.inputs[0], g);
      return;
    }

    case OpKind::Relu: {
      std::vector<double> g(G.numel());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = Y[i] > 0.0 ? G[i] : 0.0;
      accumulate(n.inputs[0], g);
      return;
    }

    case OpKind::Sigmoid: {
      std::vector<double> g(G.numel());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = G[i] * Y[i] * (1.0 - Y[i]);
      accumulate(n.inputs[0], g);
      return;
    }

    case OpKind::Exp: {
      std::vector<double> g(G.numel());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = G[i] * Y[i];
      accumulate(n.inputs[0], g);
      return;
    }

    case OpKind::LogSoftmax: {
      std::vector<double> g(G.numel());
      const std::size_t cols = Y.cols();
      for (std::size_t i = 0; i < Y.rows(); ++i) {
        double gsum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) gsum += G.at(i, j);
        for (std::size_t j = 0; j < cols; ++j) {
          g[i * cols + j] = G.at(i, j) - std::exp(Y.at(i, j)) * gsum;
        }
      }
      accumulate(n.inputs[0], g);
      return;
    }

    case OpKind::ClampedLog: {
      const Tensor& X = nodes_[n.inputs[0]].value;
      const double eps = n.a;
      std::vector<double> g(G.numel());
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = X[i];
        g[i] = (x > eps && x < 1.0 - eps) ? G[i] / x : 0.0;
      }
      accumulate(n.inputs[0], g);
      return;
    }

    case OpKind::ConcatRows: {
      std::size_t offset = 0;
      for (auto in : n.inputs) {
        const std::size_t len = nodes_[in].value.numel();
        accumulate(in, G.data().subspan(offset, len));
        offset += len;
      }
      return;
    }

    case OpKind::OuterFlatten: {
      const std::size_t ia = n.inputs[0], ib = n.inputs[1];
      const Tensor& A = nodes_[ia].value;
      const Tensor& B = nodes_[ib].value;
      const std::size_t da = A.cols(), db = B.cols();
      if (nodes_[ia].requires_grad) {
        Tensor& dA = grad_buffer(ia);
        for (std::size_t i = 0; i < A.rows(); ++i)
          for (std::size_t j = 0; j < da; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < db; ++k) s += G.at(i, j * db + k) * B.at(i, k);
            dA.at(i, j) += s;
          }
      }
      if (nodes_[ib].requires_grad) {
        Tensor& dB = grad_buffer(ib);
        for (std::size_t i = 0; i < A.rows(); ++i)
          for (std::size_t k = 0; k < db; ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < da; ++j) s += G.at(i, j * db + k) * A.at(i, j);
            dB.at(i, k) += s;
          }
      }
      return;
    }

    case OpKind::ReduceMean: {
      const std::size_t len = nodes_[n.inputs[0]].value.numel();
      std::vector<double> g(len, G[0] / static_cast<double>(len));
      accumulate(n.inputs[0], g);
      return;
    }

    case OpKind::WeightedSum: {
      std::vector<double> g(n.coeffs.size());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = G[0] * n.coeffs[i];
      accumulate(n.inputs[0], g);
      return;
    }

    case OpKind::Pick: {
      const std::size_t in = n.inputs[0];
      if (!nodes_[in].requires_grad) return;
      Tensor& dX = grad_buffer(in);
      for (std::size_t i = 0; i < n.indices.size(); ++i) dX.at(i, n.indices[i]) += G[i];
      return;
    }

    case OpKind::GatherRows: {
      const std::size_t in = n.inputs[0];
      if (!nodes_[in].requires_grad) return;
      Tensor& dX = grad_buffer(in);
      for (std::size_t k = 0; k < n.indices.size(); ++k) {
        auto dst = dX.row(n.indices[k]);
        auto src = G.row(k);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
      return;
    }

    case OpKind::ScaleRows: {
      std::vector<double> g(G.numel());
      const std::size_t cols = G.cols();
      for (std::size_t i = 0; i < G.rows(); ++i)
        for (std::size_t j = 0; j < cols; ++j) g[i * cols + j] = n.coeffs[i] * G.at(i, j);
      accumulate(n.inputs[0], g);
      return;
    }
  }
}

}  // namespace rada::ad
