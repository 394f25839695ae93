#include "rada/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rada {

void LossConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("lambda must be finite and nonnegative");
  }
  if (!(clamp_eps > 0.0 && clamp_eps <= 1e-6)) {
    throw std::invalid_argument("clamp_eps must lie in (0, 1e-6]");
  }
}

double LossConfig::lambda_at(double progress) const {
  if (!lambda_ramp) return lambda;
  return lambda * (2.0 / (1.0 + std::exp(-10.0 * progress)) - 1.0);
}

ad::Var classification_loss(ad::Graph& g, ad::Var log_probs,
                            std::span<const std::size_t> labels,
                            const std::vector<bool>& mask) {
  const auto& LP = g.value(log_probs);
  const std::size_t n = LP.rows();
  if (labels.size() != n || mask.size() != n) {
    throw std::invalid_argument("classification_loss: " + std::to_string(n) + " rows but " +
                                std::to_string(labels.size()) + " labels and " +
                                std::to_string(mask.size()) + " mask entries");
  }
  std::size_t count = 0;
  for (bool m : mask) count += m ? 1 : 0;
  if (count == 0) {
    throw std::invalid_argument("classification_loss: every sample is masked out");
  }
  std::vector<std::size_t> picks(n, 0);
  std::vector<double> w(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    if (labels[i] >= LP.cols()) {
      throw std::invalid_argument("classification_loss: label " + std::to_string(labels[i]) +
                                  " out of range for " + std::to_string(LP.cols()) +
                                  " classes");
    }
    picks[i] = labels[i];
    w[i] = -1.0 / static_cast<double>(count);
  }
  return g.weighted_sum(g.pick(log_probs, std::move(picks)), std::move(w));
}

double classification_loss(const Tensor& log_probs, std::span<const std::size_t> labels,
                           const std::vector<bool>& mask) {
  ad::Graph g(false);
  return g.value(classification_loss(g, g.constant(log_probs), labels, mask)).item();
}

AdversarialLoss adversarial_loss(ad::Graph& g, ad::Var p_source,
                                 std::span<const Domain> labels,
                                 std::span<const double> weights, double clamp_eps) {
  const std::size_t n = g.value(p_source).numel();
  if (n == 0 || labels.empty()) throw std::invalid_argument("adversarial_loss: empty batch");
  if (labels.size() != n || weights.size() != n) {
    throw std::invalid_argument("adversarial_loss: " + std::to_string(n) +
                                " predictions but " + std::to_string(labels.size()) +
                                " labels and " + std::to_string(weights.size()) + " weights");
  }
  double ws = 0.0, wt = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      throw std::invalid_argument("adversarial_loss: weights must be positive");
    }
    (labels[i] == Domain::Source ? ws : wt) += weights[i];
  }
  if (ws == 0.0) throw std::invalid_argument("adversarial_loss: no source-labeled sample");

  std::vector<double> src(n, 0.0), tgt(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == Domain::Source) {
      src[i] = -weights[i] / ws;
    } else {
      tgt[i] = -weights[i] / wt;
    }
  }
  AdversarialLoss out;
  out.value = g.weighted_sum(g.clamped_log(p_source, clamp_eps), std::move(src));
  if (wt > 0.0) {
    ad::Var p_target = g.affine(p_source, -1.0, 1.0);
    out.value = g.add(out.value, g.weighted_sum(g.clamped_log(p_target, clamp_eps), std::move(tgt)));
  } else {
    out.degenerate = true;
  }
  return out;
}

double adversarial_loss(std::span<const DomainPrediction> preds,
                        std::span<const Domain> labels, std::span<const double> weights,
                        double clamp_eps) {
  std::vector<double> p(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) p[i] = preds[i].p_source;
  if (p.empty()) throw std::invalid_argument("adversarial_loss: empty batch");
  ad::Graph g(false);
  const std::size_t n = p.size();
  auto col = g.constant(Tensor({n, 1}, std::move(p)));
  return g.value(adversarial_loss(g, col, labels, weights, clamp_eps).value).item();
}

std::vector<double> object_entropy(const Tensor& log_probs) {
  std::vector<double> ent(log_probs.rows(), 0.0);
  for (std::size_t i = 0; i < log_probs.rows(); ++i) {
    double h = 0.0;
    for (double lp : log_probs.row(i)) {
      const double p = std::exp(lp);
      if (p > 0.0) h -= p * lp;
    }
    ent[i] = h;
  }
  return ent;
}

std::vector<double> sample_weights(ReweightMode mode,
                                   std::span<const double> object_entropy,
                                   std::span<const DomainPrediction> domain_preds,
                                   std::span<const Domain> labels) {
  const std::size_t n = labels.size();
  std::vector<double> w(n, 1.0);
  if (mode == ReweightMode::None) return w;
  if (mode == ReweightMode::Discriminator ? domain_preds.size() != n
                                          : object_entropy.size() != n) {
    throw std::invalid_argument("sample_weights: per-sample inputs do not match " +
                                std::to_string(n) + " labels");
  }

  for (std::size_t i = 0; i < n; ++i) {
    switch (mode) {
      case ReweightMode::Entropy:
        w[i] = 1.0 + std::exp(-object_entropy[i]);
        break;
      case ReweightMode::InverseEntropy:
        w[i] = 1.0 / (1.0 + std::exp(-object_entropy[i]));
        break;
      case ReweightMode::Discriminator:
        w[i] = labels[i] == Domain::Source ? domain_preds[i].p0 : 1.0;
        break;
      case ReweightMode::None:
        break;
    }
  }
  for (Domain d : {Domain::Source, Domain::Target}) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] == d) {
        sum += w[i];
        ++count;
      }
    }
    if (count == 0) continue;
    const double mean = sum / static_cast<double>(count);
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] == d) w[i] /= mean;
    }
  }
  return w;
}

}  // namespace rada
