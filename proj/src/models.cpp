#include "rada/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rada {

namespace {

using Net = ModelBundle::Net;

std::vector<std::size_t> layer_dims(const ModelSpec& s, Net net) {
  std::vector<std::size_t> dims;
  switch (net) {
    case Net::F:
      dims.push_back(s.input_dim);
      dims.insert(dims.end(), s.feature_widths.begin(), s.feature_widths.end());
      break;
    case Net::C:
      dims.push_back(s.feature_dim());
      dims.insert(dims.end(), s.classifier_hidden.begin(), s.classifier_hidden.end());
      dims.push_back(s.num_classes);
      break;
    case Net::D:
      dims.push_back(s.discriminator_input_dim());
      dims.insert(dims.end(), s.discriminator_hidden.begin(),
                  s.discriminator_hidden.end());
      dims.push_back(1);
      break;
  }
  return dims;
}

const char* net_name(Net net) {
  switch (net) {
    case Net::F: return "F";
    case Net::C: return "C";
    case Net::D: return "D";
  }
  return "?";
}

constexpr Net kNets[] = {Net::F, Net::C, Net::D};

void check_cols(const char* op, std::size_t expected, const Tensor& t) {
  if (t.rank() != 2 || t.cols() != expected) {
    throw std::invalid_argument(std::string(op) + ": expected " +
                                std::to_string(expected) +
                                " input columns, got shape " + to_string(t.shape()));
  }
}

}  // namespace

std::size_t ModelSpec::feature_dim() const {
  return feature_widths.empty() ? input_dim : feature_widths.back();
}

std::size_t ModelSpec::discriminator_input_dim() const {
  return conditioning == Conditioning::Cdan ? feature_dim() * num_classes
                                            : feature_dim();
}

void ModelSpec::validate() const {
  auto positive = [](const std::vector<std::size_t>& v) {
    return std::all_of(v.begin(), v.end(), [](std::size_t w) { return w > 0; });
  };
  if (input_dim == 0) throw std::invalid_argument("model: input_dim must be positive");
  if (feature_widths.empty()) {
    throw std::invalid_argument("model: feature extractor needs at least one layer");
  }
  if (num_classes < 2) throw std::invalid_argument("model: num_classes must be >= 2");
  if (!positive(feature_widths) || !positive(classifier_hidden) ||
      !positive(discriminator_hidden)) {
    throw std::invalid_argument("model: layer widths must be positive");
  }
}

DomainPrediction DomainPrediction::from_source_probability(double p, double clamp_eps) {
  DomainPrediction d;
  d.p_source = std::clamp(p, clamp_eps, 1.0 - clamp_eps);
  d.p0 = 1.0 - d.p_source;
  return d;
}

ModelBundle::ModelBundle(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  for (Net net : kNets) {
    const auto dims = layer_dims(spec_, net);
    layers_[static_cast<int>(net)] = dims.size() - 1;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const std::string prefix = std::string(net_name(net)) + "." + std::to_string(l);
      params_.emplace_back(Shape{dims[l], dims[l + 1]}, 0.0);
      names_.push_back(prefix + ".weight");
      params_.emplace_back(Shape{dims[l + 1]}, 0.0);
      names_.push_back(prefix + ".bias");
    }
  }
}

ModelBundle ModelBundle::zeros(const ModelSpec& spec) { return ModelBundle(spec); }

ModelBundle ModelBundle::initialize(const ModelSpec& spec, Rng& rng) {
  ModelBundle m(spec);
  for (std::size_t i = 0; i < m.params_.size(); i += 2) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(m.params_[i].rows()));
    for (auto& v : m.params_[i].raw()) v = rng.uniform(-bound, bound);
    for (auto& v : m.params_[i + 1].raw()) v = rng.uniform(-bound, bound);
  }
  return m;
}

ModelBundle ModelBundle::from_parameters(const ModelSpec& spec,
                                         std::vector<Tensor> params) {
  ModelBundle m(spec);
  if (params.size() != m.params_.size()) {
    throw std::invalid_argument("model: expected " + std::to_string(m.params_.size()) +
                                " parameter tensors, got " +
                                std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != m.params_[i].shape()) {
      throw std::invalid_argument("model: parameter " + m.names_[i] + " has shape " +
                                  to_string(params[i].shape()) + ", expected " +
                                  to_string(m.params_[i].shape()));
    }
  }
  m.params_ = std::move(params);
  return m;
}

std::size_t ModelBundle::layer_count(Net net) const {
  return layers_[static_cast<int>(net)];
}

std::size_t ModelBundle::parameter_index(Net net, std::size_t layer) const {
  if (layer >= layer_count(net)) throw std::out_of_range("model: layer index out of range");
  std::size_t offset = 0;
  for (Net n : kNets) {
    if (n == net) break;
    offset += 2 * layer_count(n);
  }
  return offset + 2 * layer;
}

Tensor& ModelBundle::weight(Net net, std::size_t layer) { return params_[parameter_index(net, layer)]; }
Tensor& ModelBundle::bias(Net net, std::size_t layer) { return params_[parameter_index(net, layer) + 1]; }
const Tensor& ModelBundle::weight(Net net, std::size_t layer) const {
  return params_[parameter_index(net, layer)];
}
const Tensor& ModelBundle::bias(Net net, std::size_t layer) const {
  return params_[parameter_index(net, layer) + 1];
}

BoundModel bind(ad::Graph& g, const ModelBundle& model) {
  BoundModel b;
  b.model = &model;
  for (const auto& p : model.parameters()) b.params.push_back(g.parameter(p));
  return b;
}

ad::Var BoundModel::weight(Net net, std::size_t layer) const {
  return params.at(model->parameter_index(net, layer));
}

ad::Var BoundModel::bias(Net net, std::size_t layer) const {
  return params.at(model->parameter_index(net, layer) + 1);
}

namespace {

ad::Var dense_stack(ad::Graph& g, const BoundModel& m, Net net, ad::Var x,
                    bool relu_last) {
  const std::size_t layers = m.model->layer_count(net);
  for (std::size_t l = 0; l < layers; ++l) {
    x = g.add_bias(g.matmul(x, m.weight(net, l)), m.bias(net, l));
    if (l + 1 < layers || relu_last) x = g.relu(x);
  }
  return x;
}

}  // namespace

ad::Var feature_extract(ad::Graph& g, const BoundModel& m, ad::Var x) {
  check_cols("feature_extract", m.model->spec().input_dim, g.value(x));
  return dense_stack(g, m, Net::F, x, true);
}

ad::Var classify(ad::Graph& g, const BoundModel& m, ad::Var features) {
  check_cols("classify", m.model->spec().feature_dim(), g.value(features));
  return g.log_softmax(dense_stack(g, m, Net::C, features, false));
}

ad::Var discriminate(ad::Graph& g, const BoundModel& m, ad::Var d_input) {
  check_cols("discriminate", m.model->spec().discriminator_input_dim(), g.value(d_input));
  return g.sigmoid(dense_stack(g, m, Net::D, d_input, false));
}

ad::Var cdan_condition(ad::Graph& g, ad::Var features, ad::Var class_probs) {
  const auto& F = g.value(features);
  const auto& P = g.value(class_probs);
  if (F.rank() != 2 || P.rank() != 2 || F.rows() != P.rows()) {
    throw std::invalid_argument("cdan_condition: row count mismatch between features " +
                                to_string(F.shape()) + " and class probabilities " +
                                to_string(P.shape()));
  }
  return g.outer_flatten(features, class_probs);
}

ad::Var discriminator_input(ad::Graph& g, const ModelBundle& model, ad::Var features,
                            ad::Var log_probs) {
  if (model.spec().conditioning == Conditioning::Plain) return features;
  ad::Var probs = g.exp(log_probs);
  if (model.spec().condition_detach) probs = g.detach(probs);
  return cdan_condition(g, features, probs);
}

std::vector<DomainPrediction> domain_predictions(const Tensor& p_source_column,
                                                 double clamp_eps) {
  std::vector<DomainPrediction> out;
  out.reserve(p_source_column.numel());
  for (double p : p_source_column.raw()) {
    out.push_back(DomainPrediction::from_source_probability(p, clamp_eps));
  }
  return out;
}

Tensor feature_extract(const ModelBundle& model, const Tensor& x) {
  ad::Graph g(false);
  auto m = bind(g, model);
  return g.value(feature_extract(g, m, g.constant(x)));
}

Tensor classify(const ModelBundle& model, const Tensor& features) {
  ad::Graph g(false);
  auto m = bind(g, model);
  return g.value(classify(g, m, g.constant(features)));
}

std::vector<DomainPrediction> discriminate(const ModelBundle& model, const Tensor& d_input) {
  ad::Graph g(false);
  auto m = bind(g, model);
  return domain_predictions(g.value(discriminate(g, m, g.constant(d_input))));
}

Tensor cdan_condition(const Tensor& features, const Tensor& class_probs) {
  ad::Graph g(false);
  return g.value(cdan_condition(g, g.constant(features), g.constant(class_probs)));
}

}  // namespace rada
