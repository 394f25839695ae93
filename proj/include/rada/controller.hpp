#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "rada/autodiff.hpp"
#include "rada/datasets.hpp"
#include "rada/domain.hpp"
#include "rada/rng.hpp"

namespace rada {

struct RadaConfig {
  double tau = 0.35;               // relabel when domain entropy > tau
  std::size_t patience_k = 5;      // non-improving epochs before activation
  double epsilon_improve = 1e-3;   // required drop in mean entropy
  bool mixup_enabled = true;
  bool mixup_feature_grad = true;  // false: mixed features are detached (trains D only)
  bool relabel_persistent = false; // experimental: relabels stick across batches

  void validate() const;
};

/// Plateau detector memory. `active` never returns to false.
struct RadaState {
  bool active = false;
  double best_entropy = std::numeric_limits<double>::infinity();
  std::size_t plateau_counter = 0;
  std::vector<double> entropy_history;

  friend bool operator==(const RadaState&, const RadaState&) = default;
};

/// Indices into the entropy list that was thresholded. For a batch that list
/// is the batch's working-target samples in batch order, so index k means
/// "the k-th sample still labeled target".
struct RelabelDecision {
  std::vector<std::size_t> indices;
  std::vector<double> entropies;
};

/// Binary entropy in nats of a domain prediction, with 0 log 0 = 0.
/// Throws unless p0 is in [0, 1].
double domain_entropy(double p0);

/// indices = { i : entropies[i] > tau } (strict).
RelabelDecision select_relabels(std::span<const double> entropies, double tau);

/// Decision over a batch's working-target samples from D's target
/// probabilities for every batch row.
RelabelDecision select_batch_relabels(const Batch& batch, std::span<const double> p0,
                                      double tau);

/// Copy of `batch` with the chosen working-target samples labeled Source.
/// Class labels and the classification mask are untouched.
Batch relabel_batch(Batch batch, const RelabelDecision& decision);

/// Pairing for feature mixup: mixed row k is
///   alphas[k] * f[source_rows[k]] + (1 - alphas[k]) * f[relabeled_rows[k]].
struct MixupPlan {
  std::vector<std::size_t> source_rows;
  std::vector<std::size_t> relabeled_rows;
  std::vector<double> alphas;

  bool empty() const { return alphas.empty(); }
};

/// One mixed sample per relabeled row; partner drawn uniformly with
/// replacement from `source_rows`, alpha ~ U(0, 1). Empty if either side is.
MixupPlan draw_mixup(std::span<const std::size_t> source_rows,
                     std::span<const std::size_t> relabeled_rows, Rng& rng);

/// Mixed feature rows in the graph; gradients reach both parents.
ad::Var mixup_features(ad::Graph& g, ad::Var features, const MixupPlan& plan);

struct MixedSample {
  std::vector<double> feature;
  double alpha = 0.0;
  std::size_t source_partner = 0;
  std::size_t relabeled = 0;
  Domain domain = Domain::Source;
  std::optional<std::size_t> class_label;  // always empty
};

/// Value-level mixup between two feature sets (rows are samples).
std::vector<MixedSample> mixup_features(const Tensor& source_features,
                                        const Tensor& relabeled_features, Rng& rng);

/// End-of-epoch update from the epoch's mean domain entropy.
RadaState controller_step(double epoch_mean_entropy, RadaState state,
                          const RadaConfig& config);

}  // namespace rada
