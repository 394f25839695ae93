#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rada/autodiff.hpp"
#include "rada/rng.hpp"
#include "rada/tensor.hpp"

namespace rada {

enum class Conditioning { Plain, Cdan };

/// Layer widths of the three networks. Every layer is `x W + b` with W
/// stored [fan_in, fan_out].
struct ModelSpec {
  std::size_t input_dim = 2;
  std::vector<std::size_t> feature_widths{64, 32};  // F: input -> ... -> d_f, relu after each
  std::size_t num_classes = 2;
  std::vector<std::size_t> classifier_hidden{};     // C: empty means a linear head
  std::vector<std::size_t> discriminator_hidden{32};
  Conditioning conditioning = Conditioning::Plain;
  // Class probabilities fed to the CDAN outer product are detached copies.
  bool condition_detach = true;

  std::size_t feature_dim() const;
  std::size_t discriminator_input_dim() const;
  void validate() const;
};

/// Discriminator output for one sample. p0 is the target-domain probability.
struct DomainPrediction {
  double p_source = 0.5;
  double p0 = 0.5;

  static DomainPrediction from_source_probability(double p, double clamp_eps = 1e-12);
};

/// Parameters of the feature extractor F, object classifier C and domain
/// discriminator D, stored contiguously (F, then C, then D; weight before
/// bias within a layer) so the optimizer can walk them as one span.
class ModelBundle {
 public:
  enum class Net { F, C, D };

  /// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
  static ModelBundle initialize(const ModelSpec& spec, Rng& rng);
  static ModelBundle zeros(const ModelSpec& spec);
  /// Adopt explicit parameter values; shapes must match the layer sizes of `spec`.
  static ModelBundle from_parameters(const ModelSpec& spec, std::vector<Tensor> params);

  const ModelSpec& spec() const { return spec_; }
  std::span<Tensor> parameters() { return params_; }
  std::span<const Tensor> parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }

  std::size_t layer_count(Net net) const;
  /// Position of the layer's weight in parameters(); its bias follows.
  std::size_t parameter_index(Net net, std::size_t layer) const;
  Tensor& weight(Net net, std::size_t layer);
  Tensor& bias(Net net, std::size_t layer);
  const Tensor& weight(Net net, std::size_t layer) const;
  const Tensor& bias(Net net, std::size_t layer) const;

  friend bool operator==(const ModelBundle& a, const ModelBundle& b) {
    return a.params_ == b.params_ && a.names_ == b.names_;
  }

 private:
  explicit ModelBundle(ModelSpec spec);

  ModelSpec spec_;
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
  std::size_t layers_[3] = {0, 0, 0};
};

/// The bundle's parameters as graph leaves for one forward/backward pass.
struct BoundModel {
  const ModelBundle* model = nullptr;
  std::vector<ad::Var> params;  // same order as ModelBundle::parameters()

  ad::Var weight(ModelBundle::Net net, std::size_t layer) const;
  ad::Var bias(ModelBundle::Net net, std::size_t layer) const;
};

BoundModel bind(ad::Graph& g, const ModelBundle& model);

/// F(x): relu MLP over rows of x.
ad::Var feature_extract(ad::Graph& g, const BoundModel& m, ad::Var x);
/// C(f): per-class log-probabilities.
ad::Var classify(ad::Graph& g, const BoundModel& m, ad::Var features);
/// D(z): sigmoid output p_source as an [n, 1] column.
ad::Var discriminate(ad::Graph& g, const BoundModel& m, ad::Var d_input);
/// Row-wise flattened outer product features (x) probs, feature-major.
ad::Var cdan_condition(ad::Graph& g, ad::Var features, ad::Var class_probs);
/// D's input for the bundle's conditioning mode.
ad::Var discriminator_input(ad::Graph& g, const ModelBundle& model,
                            ad::Var features, ad::Var log_probs);

std::vector<DomainPrediction> domain_predictions(const Tensor& p_source_column,
                                                 double clamp_eps = 1e-12);

// Gradient-free conveniences over whole matrices.
Tensor feature_extract(const ModelBundle& model, const Tensor& x);
Tensor classify(const ModelBundle& model, const Tensor& features);
std::vector<DomainPrediction> discriminate(const ModelBundle& model, const Tensor& d_input);
Tensor cdan_condition(const Tensor& features, const Tensor& class_probs);

}  // namespace rada
