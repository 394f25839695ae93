#include "rada/controller.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace rada {

void RadaConfig::validate() const {
  if (!(tau > 0.0 && tau <= std::numbers::ln2)) {
    throw std::invalid_argument("tau must lie in (0, ln 2]");
  }
  if (patience_k == 0) throw std::invalid_argument("patience must be positive");
  if (!(epsilon_improve >= 0.0) || !std::isfinite(epsilon_improve)) {
    throw std::invalid_argument("epsilon_improve must be finite and nonnegative");
  }
}

double domain_entropy(double p0) {
  if (!(p0 >= 0.0 && p0 <= 1.0)) {
    throw std::invalid_argument("domain_entropy: p0 = " + std::to_string(p0) +
                                " outside [0, 1]");
  }
  auto term = [](double p) { return p > 0.0 ? -p * std::log(p) : 0.0; };
  return term(p0) + term(1.0 - p0);
}

RelabelDecision select_relabels(std::span<const double> entropies, double tau) {
  RelabelDecision d;
  d.entropies.assign(entropies.begin(), entropies.end());
  for (std::size_t i = 0; i < entropies.size(); ++i) {
    if (entropies[i] > tau) d.indices.push_back(i);
  }
  return d;
}

RelabelDecision select_batch_relabels(const Batch& batch, std::span<const double> p0,
                                      double tau) {
  if (p0.size() != batch.size()) {
    throw std::invalid_argument("select_batch_relabels: " + std::to_string(p0.size()) +
                                " predictions for a batch of " +
                                std::to_string(batch.size()));
  }
  std::vector<double> ent;
  for (auto pos : batch.working_target_positions()) ent.push_back(domain_entropy(p0[pos]));
  return select_relabels(ent, tau);
}

Batch relabel_batch(Batch batch, const RelabelDecision& decision) {
  const auto targets = batch.working_target_positions();
  for (auto k : decision.indices) {
    if (k >= targets.size()) {
      throw std::out_of_range("relabel_batch: index " + std::to_string(k) +
                              " does not name a target sample (batch has " +
                              std::to_string(targets.size()) + ")");
    }
  }
  for (auto k : decision.indices) {
    auto& label = batch.working_domain[targets[k]];
    if (label == Domain::Source) {
      throw std::invalid_argument("relabel_batch: index " + std::to_string(k) +
                                  " repeated; sample already labeled source");
    }
    label = Domain::Source;
  }
  return batch;
}

MixupPlan draw_mixup(std::span<const std::size_t> source_rows,
                     std::span<const std::size_t> relabeled_rows, Rng& rng) {
  MixupPlan plan;
  if (source_rows.empty() || relabeled_rows.empty()) return plan;
  for (auto j : relabeled_rows) {
    plan.source_rows.push_back(source_rows[rng.uniform_index(source_rows.size())]);
    plan.relabeled_rows.push_back(j);
    plan.alphas.push_back(rng.uniform01());
  }
  return plan;
}

ad::Var mixup_features(ad::Graph& g, ad::Var features, const MixupPlan& plan) {
  if (plan.empty()) throw std::invalid_argument("mixup_features: empty plan");
  std::vector<double> complement(plan.alphas.size());
  for (std::size_t k = 0; k < complement.size(); ++k) complement[k] = 1.0 - plan.alphas[k];
  ad::Var src = g.scale_rows(g.gather_rows(features, plan.source_rows), plan.alphas);
  ad::Var rel = g.scale_rows(g.gather_rows(features, plan.relabeled_rows), std::move(complement));
  return g.add(src, rel);
}

std::vector<MixedSample> mixup_features(const Tensor& source_features,
                                        const Tensor& relabeled_features, Rng& rng) {
  std::vector<MixedSample> out;
  if (source_features.empty() || relabeled_features.empty()) return out;
  if (source_features.cols() != relabeled_features.cols()) {
    throw std::invalid_argument("mixup_features: feature dimensions differ (" +
                                to_string(source_features.shape()) + " vs " +
                                to_string(relabeled_features.shape()) + ")");
  }
  const std::size_t ns = source_features.rows(), nr = relabeled_features.rows();
  ad::Graph g(false);
  ad::Var both = g.concat_rows(std::vector<ad::Var>{g.constant(source_features),
                                                    g.constant(relabeled_features)});
  std::vector<std::size_t> src(ns), rel(nr);
  for (std::size_t i = 0; i < ns; ++i) src[i] = i;
  for (std::size_t j = 0; j < nr; ++j) rel[j] = ns + j;
  const MixupPlan plan = draw_mixup(src, rel, rng);
  const Tensor& mixed = g.value(mixup_features(g, both, plan));
  for (std::size_t k = 0; k < nr; ++k) {
    MixedSample m;
    auto r = mixed.row(k);
    m.feature.assign(r.begin(), r.end());
    m.alpha = plan.alphas[k];
    m.source_partner = plan.source_rows[k];
    m.relabeled = plan.relabeled_rows[k] - ns;
    out.push_back(std::move(m));
  }
  return out;
}

RadaState controller_step(double epoch_mean_entropy, RadaState state,
                          const RadaConfig& config) {
  state.entropy_history.push_back(epoch_mean_entropy);
  if (epoch_mean_entropy < state.best_entropy - config.epsilon_improve) {
    state.best_entropy = epoch_mean_entropy;
    state.plateau_counter = 0;
  } else {
    ++state.plateau_counter;
  }
  if (!state.active && state.plateau_counter >= config.patience_k) state.active = true;
  return state;
}

}  // namespace rada
