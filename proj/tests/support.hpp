#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rada/autodiff.hpp"
#include "rada/models.hpp"
#include "rada/rng.hpp"
#include "rada/tensor.hpp"

namespace rada::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.raw()) v = rng.uniform(lo, hi);
  return t;
}

// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero gradients from
// turning roundoff into huge ratios.
inline double relative_error(double analytic, double numeric, double floor = 1e-2) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

using LossFn = std::function<ad::Var(ad::Graph&, const std::vector<ad::Var>&)>;

inline double evaluate(const std::vector<Tensor>& params, const LossFn& loss) {
  ad::Graph g(false);
  std::vector<ad::Var> vars;
  for (const auto& p : params) vars.push_back(g.constant(p));
  return g.value(loss(g, vars)).item();
}

inline std::vector<Tensor> analytic_gradients(const std::vector<Tensor>& params,
                                              const LossFn& loss) {
  ad::Graph g;
  std::vector<ad::Var> vars;
  for (const auto& p : params) vars.push_back(g.parameter(p));
  return g.backward(loss(g, vars));
}

// Largest relative error between backprop and central differences over every
// entry of every parameter.
inline double gradient_check(std::vector<Tensor> params, const LossFn& loss, double h = 1e-6) {
  const auto grads = analytic_gradients(params, loss);
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].numel(); ++i) {
      const double keep = params[p][i];
      params[p][i] = keep + h;
      const double up = evaluate(params, loss);
      params[p][i] = keep - h;
      const double down = evaluate(params, loss);
      params[p][i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, relative_error(grads[p][i], numeric));
    }
  }
  return worst;
}

// Random fixed weights that turn any tensor into a scalar loss.
inline std::vector<double> random_weights(Rng& rng, std::size_t n) {
  std::vector<double> w(n);
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  return w;
}

struct Fixture {
  std::string name;
  std::vector<Tensor> params;
  LossFn loss;
};

inline std::size_t dim(Rng& rng, std::size_t lo = 1, std::size_t hi = 4) {
  return lo + rng.uniform_index(hi - lo + 1);
}

// One randomly shaped fixture per differentiable primitive. Each output is
// reduced to a scalar with random fixed weights.
inline std::vector<Fixture> primitive_fixtures(Rng& rng) {
  using ad::Graph;
  using ad::Var;
  using V = std::vector<Var>;
  const std::size_t n = dim(rng), k = dim(rng), m = dim(rng);
  auto reduce = [w = random_weights(rng, 64)](Graph& g, Var x) {
    const auto cnt = g.value(x).numel();
    return g.weighted_sum(x, std::vector<double>(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(cnt)));
  };
  const double c = rng.uniform(-2.0, 2.0), c2 = rng.uniform(-2.0, 2.0);
  std::vector<std::size_t> cols(n), rows(n + 1);
  for (auto& v : cols) v = rng.uniform_index(m);
  for (auto& v : rows) v = rng.uniform_index(n);
  const auto coeffs = random_weights(rng, n);

  std::vector<Fixture> f;
  f.push_back({"matmul", {random_tensor(rng, {n, k}), random_tensor(rng, {k, m})},
               [=](Graph& g, const V& p) { return reduce(g, g.matmul(p[0], p[1])); }});
  f.push_back({"add_bias", {random_tensor(rng, {n, m}), random_tensor(rng, {m})},
               [=](Graph& g, const V& p) { return reduce(g, g.add_bias(p[0], p[1])); }});
  f.push_back({"add", {random_tensor(rng, {n, m}), random_tensor(rng, {n, m})},
               [=](Graph& g, const V& p) { return reduce(g, g.add(p[0], p[1])); }});
  f.push_back({"scale", {random_tensor(rng, {n, m})},
               [=](Graph& g, const V& p) { return reduce(g, g.scale(p[0], c)); }});
  f.push_back({"affine", {random_tensor(rng, {n, m})},
               [=](Graph& g, const V& p) { return reduce(g, g.affine(p[0], c, c2)); }});
  f.push_back({"relu", {random_tensor(rng, {n, m})},
               [=](Graph& g, const V& p) { return reduce(g, g.relu(p[0])); }});
  f.push_back({"sigmoid", {random_tensor(rng, {n, m})},
               [=](Graph& g, const V& p) { return reduce(g, g.sigmoid(p[0])); }});
  f.push_back({"exp", {random_tensor(rng, {n, m})},
               [=](Graph& g, const V& p) { return reduce(g, g.exp(p[0])); }});
  f.push_back({"log_softmax", {random_tensor(rng, {n, m})},
               [=](Graph& g, const V& p) { return reduce(g, g.log_softmax(p[0])); }});
  f.push_back({"clamped_log", {random_tensor(rng, {n, m}, 0.05, 0.95)},
               [=](Graph& g, const V& p) { return reduce(g, g.clamped_log(p[0], 1e-12)); }});
  f.push_back({"concat_rows", {random_tensor(rng, {n, m}), random_tensor(rng, {k, m})},
               [=](Graph& g, const V& p) { return reduce(g, g.concat_rows(p)); }});
  f.push_back({"outer_flatten", {random_tensor(rng, {n, k}), random_tensor(rng, {n, m})},
               [=](Graph& g, const V& p) { return reduce(g, g.outer_flatten(p[0], p[1])); }});
  f.push_back({"reduce_mean", {random_tensor(rng, {n, m})},
               [=](Graph& g, const V& p) { return g.reduce_mean(p[0]); }});
  f.push_back({"weighted_sum", {random_tensor(rng, {n, m})},
               [=](Graph& g, const V& p) { return reduce(g, p[0]); }});
  f.push_back({"pick", {random_tensor(rng, {n, m})},
               [=](Graph& g, const V& p) { return reduce(g, g.pick(p[0], cols)); }});
  f.push_back({"gather_rows", {random_tensor(rng, {n, m})},
               [=](Graph& g, const V& p) { return reduce(g, g.gather_rows(p[0], rows)); }});
  f.push_back({"scale_rows", {random_tensor(rng, {n, m})},
               [=](Graph& g, const V& p) { return reduce(g, g.scale_rows(p[0], coeffs)); }});
  return f;
}

inline ModelSpec small_spec(Rng& rng, Conditioning mode) {
  ModelSpec s;
  s.input_dim = dim(rng, 1, 3);
  s.feature_widths = {dim(rng, 2, 5), dim(rng, 2, 4)};
  s.num_classes = dim(rng, 2, 3);
  s.classifier_hidden = rng.uniform01() < 0.5 ? std::vector<std::size_t>{} : std::vector<std::size_t>{dim(rng, 2, 4)};
  s.discriminator_hidden = {dim(rng, 2, 4)};
  s.conditioning = mode;
  // finite differences see the path through the conditioning probabilities
  s.condition_detach = false;
  return s;
}

// Composite fixtures over a random model: F->C and F->D (plain and cdan).
// The leading parameter is the input batch, the rest are the model's.
inline std::vector<Fixture> composite_fixtures(Rng& rng) {
  using ad::Graph;
  using ad::Var;
  using V = std::vector<Var>;
  std::vector<Fixture> out;
  for (auto mode : {Conditioning::Plain, Conditioning::Cdan}) {
    const ModelSpec spec = small_spec(rng, mode);
    auto model = std::make_shared<ModelBundle>(ModelBundle::initialize(spec, rng));
    const std::size_t n = dim(rng, 2, 5);
    std::vector<Tensor> params{random_tensor(rng, {n, spec.input_dim})};
    params.insert(params.end(), model->parameters().begin(), model->parameters().end());
    const auto wc = random_weights(rng, n * spec.num_classes);
    const auto wd = random_weights(rng, n);
    auto bound = [model](const V& p) {
      return BoundModel{model.get(), std::vector<Var>(p.begin() + 1, p.end())};
    };
    const std::string tag = mode == Conditioning::Cdan ? "cdan" : "plain";
    if (mode == Conditioning::Plain) {
      out.push_back({"F->C", params, [=](Graph& g, const V& p) {
                       const auto m = bound(p);
                       return g.weighted_sum(classify(g, m, feature_extract(g, m, p[0])), wc);
                     }});
    }
    out.push_back({"F->D " + tag, params, [=](Graph& g, const V& p) {
                     const auto m = bound(p);
                     const Var f = feature_extract(g, m, p[0]);
                     const Var lp = classify(g, m, f);
                     return g.weighted_sum(discriminate(g, m, discriminator_input(g, *model, f, lp)), wd);
                   }});
  }
  return out;
}

}  // namespace rada::testing
