#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rada/autodiff.hpp"
#include "rada/domain.hpp"
#include "rada/models.hpp"

namespace rada {

enum class ReweightMode { None, Entropy, InverseEntropy, Discriminator };

struct LossConfig {
  double lambda = 1.0;                 // adversarial balance, applied through the GRL
  bool lambda_ramp = false;            // scale by 2/(1+exp(-10 p)) - 1 over progress p
  ReweightMode reweight = ReweightMode::None;
  double clamp_eps = 1e-12;

  void validate() const;
  double lambda_at(double progress) const;
};

/// Mean of -log_probs[i, labels[i]] over rows with mask[i] set.
/// Throws if no row is masked in.
ad::Var classification_loss(ad::Graph& g, ad::Var log_probs,
                            std::span<const std::size_t> labels,
                            const std::vector<bool>& mask);
double classification_loss(const Tensor& log_probs, std::span<const std::size_t> labels,
                           const std::vector<bool>& mask);

struct AdversarialLoss {
  ad::Var value;
  // No target-labeled rows were left, so the target term was dropped.
  bool degenerate = false;
};

/// Weighted binary cross-entropy of the discriminator:
///   sum_s w (-log p) / sum_s w  +  sum_t w (-log(1 - p)) / sum_t w
/// with p clamped to [eps, 1 - eps]. `p_source` is the [n, 1] output of D.
AdversarialLoss adversarial_loss(ad::Graph& g, ad::Var p_source,
                                 std::span<const Domain> labels,
                                 std::span<const double> weights,
                                 double clamp_eps = 1e-12);
double adversarial_loss(std::span<const DomainPrediction> preds,
                        std::span<const Domain> labels, std::span<const double> weights,
                        double clamp_eps = 1e-12);

/// Shannon entropy (nats) of each row's class distribution.
std::vector<double> object_entropy(const Tensor& log_probs);

/// Per-sample adversarial weights, normalized to mean 1 within each domain
/// subset of `labels`.
///   Entropy:        1 + exp(-ent)
///   InverseEntropy: 1 / (1 + exp(-ent))
///   Discriminator:  source rows get p0 (D's target probability), target rows 1.
///                   Approximates importance weighting that suppresses
///                   easily separated source samples.
std::vector<double> sample_weights(ReweightMode mode,
                                   std::span<const double> object_entropy,
                                   std::span<const DomainPrediction> domain_preds,
                                   std::span<const Domain> labels);

}  // namespace rada
