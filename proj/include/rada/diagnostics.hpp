#pragma once

#include <cstddef>
#include <vector>

#include "rada/datasets.hpp"
#include "rada/models.hpp"
#include "rada/tensor.hpp"

namespace rada {

/// Multi-scale RBF kernel for the biased (V-statistic) MMD estimate.
/// Bandwidths are multiples of the median pairwise squared distance of the
/// pooled sample.
struct MmdConfig {
  std::vector<double> bandwidth_multipliers{0.25, 0.5, 1.0, 2.0, 4.0};
  std::size_t max_samples_per_domain = 1000;

  void validate() const;
};

/// One epoch of training diagnostics; column order of metrics.csv.
struct MetricsRow {
  std::size_t epoch = 0;
  double loss_cls = 0.0;
  double loss_adv = 0.0;
  double mean_domain_entropy = 0.0;
  double mmd = 0.0;
  double target_accuracy = 0.0;
  double relabel_fraction = 0.0;
  bool rada_active = false;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

/// Mean of domain_entropy(p0) over every sample of the dataset, no gradients.
double mean_domain_entropy(const ModelBundle& model, const Dataset& ds);

/// sqrt(MMD^2) between the rows of two feature matrices, 0 when MMD^2 is within
/// rounding of zero. Sets larger than max_samples_per_domain are subsampled at
/// a fixed stride.
double mmd(const Tensor& source_features, const Tensor& target_features,
           const MmdConfig& config = {});

/// Fraction of target samples whose argmax prediction (ties to the lowest
/// class index) equals the evaluation label.
double target_accuracy(const ModelBundle& model, const Dataset& ds);

std::size_t argmax_row(std::span<const double> row);

struct Diagnostics {
  double mean_domain_entropy = 0.0;
  double mmd = 0.0;
  double target_accuracy = 0.0;
};

/// All three measurements from a single gradient-free forward pass.
Diagnostics diagnose(const ModelBundle& model, const Dataset& ds, const MmdConfig& config);

/// F(x) for every sample of the dataset.
Tensor dataset_features(const ModelBundle& model, const Dataset& ds);

}  // namespace rada
