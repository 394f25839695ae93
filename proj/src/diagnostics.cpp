#include "rada/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rada/controller.hpp"

namespace rada {

void MmdConfig::validate() const {
  if (bandwidth_multipliers.empty()) throw std::invalid_argument("mmd: no bandwidth multipliers");
  for (double c : bandwidth_multipliers) {
    if (!(c > 0.0) || !std::isfinite(c)) {
      throw std::invalid_argument("mmd: bandwidth multipliers must be positive");
    }
  }
  if (max_samples_per_domain == 0) {
    throw std::invalid_argument("mmd: max_samples_per_domain must be positive");
  }
}

namespace {

struct Forward {
  Tensor features;
  Tensor log_probs;
  std::vector<DomainPrediction> preds;
};

Forward forward_all(const ModelBundle& model, const Dataset& ds) {
  if (ds.size() == 0) throw std::invalid_argument("diagnostics: empty dataset");
  ad::Graph g(false);
  auto m = bind(g, model);
  auto f = feature_extract(g, m, g.constant(ds.all_features()));
  auto lp = classify(g, m, f);
  auto p = discriminate(g, m, discriminator_input(g, model, f, lp));
  return {g.value(f), g.value(lp), domain_predictions(g.value(p))};
}

double mean_entropy(const std::vector<DomainPrediction>& preds) {
  double s = 0.0;
  for (const auto& p : preds) s += domain_entropy(p.p0);
  return s / static_cast<double>(preds.size());
}

double accuracy(const Tensor& log_probs, const Dataset& ds) {
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.domain_labels[i] != Domain::Target) continue;
    ++total;
    if (argmax_row(log_probs.row(i)) == ds.class_labels[i]) ++hits;
  }
  if (total == 0) throw std::invalid_argument("target_accuracy: no target samples");
  return static_cast<double>(hits) / static_cast<double>(total);
}

Tensor rows_of(const Tensor& all, const Dataset& ds, Domain d) {
  const auto idx = ds.indices_of(d);
  std::vector<double> data;
  data.reserve(idx.size() * all.cols());
  for (auto i : idx) {
    auto r = all.row(i);
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({idx.size(), all.cols()}, std::move(data));
}

// Every stride-th row so at most `limit` rows remain.
std::vector<const double*> subsample(const Tensor& x, std::size_t limit) {
  const std::size_t n = x.rows();
  const std::size_t k = std::min(n, limit);
  std::vector<const double*> rows(k);
  for (std::size_t i = 0; i < k; ++i) rows[i] = x.row(i * n / k).data();
  return rows;
}

bool lexicographically_less(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  return std::lexicographical_compare(a.raw().begin(), a.raw().end(), b.raw().begin(),
                                      b.raw().end());
}

double median(std::vector<double>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

double mmd(const Tensor& source_features, const Tensor& target_features,
           const MmdConfig& config) {
  config.validate();
  if (source_features.empty() || target_features.empty()) {
    throw std::invalid_argument("mmd: empty feature set");
  }
  if (source_features.cols() != target_features.cols()) {
    throw std::invalid_argument("mmd: feature dimensions differ (" +
                                to_string(source_features.shape()) + " vs " +
                                to_string(target_features.shape()) + ")");
  }
  // Fixed operand order makes mmd(S, T) and mmd(T, S) the same arithmetic.
  const bool swap = lexicographically_less(target_features, source_features);
  const Tensor& a_set = swap ? target_features : source_features;
  const Tensor& b_set = swap ? source_features : target_features;

  const auto a = subsample(a_set, config.max_samples_per_domain);
  const auto b = subsample(b_set, config.max_samples_per_domain);
  const std::size_t m = a.size(), n = b.size(), dim = a_set.cols();

  auto sqdist = [dim](const double* x, const double* y) {
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t k = 0;
    for (; k + 4 <= dim; k += 4) {
      for (std::size_t l = 0; l < 4; ++l) {
        const double d = x[k + l] - y[k + l];
        acc[l] += d * d;
      }
    }
    for (; k < dim; ++k) {
      const double d = x[k] - y[k];
      acc[0] += d * d;
    }
    return (acc[0] + acc[1]) + (acc[2] + acc[3]);
  };

  // Pairwise squared distances, grouped aa | bb | ab. Buffers are reused
  // across calls since the diagnostics run every epoch.
  thread_local std::vector<double> dist, scratch;
  const std::size_t n_aa = m * (m - 1) / 2, n_bb = n * (n - 1) / 2;
  dist.resize(n_aa + n_bb + m * n);
  double* out = dist.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) *out++ = sqdist(a[i], a[j]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) *out++ = sqdist(b[i], b[j]);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) *out++ = sqdist(a[i], b[j]);
  const std::span<const double> all(dist);
  const auto d_aa = all.subspan(0, n_aa);
  const auto d_bb = all.subspan(n_aa, n_bb);
  const auto d_ab = all.subspan(n_aa + n_bb);

  scratch.assign(dist.begin(), dist.end());
  double sigma2 = median(scratch);
  if (!(sigma2 > 0.0)) sigma2 = 1.0;

  // Multipliers that are the largest one divided by 2^k reuse its kernel
  // value by squaring; any other multiplier gets its own exp.
  const double c_max = *std::max_element(config.bandwidth_multipliers.begin(),
                                         config.bandwidth_multipliers.end());
  const double base_width = -1.0 / (2.0 * c_max * sigma2);
  std::vector<int> squarings;
  std::vector<double> other_widths;
  for (double c : config.bandwidth_multipliers) {
    int e = 0;
    const double ratio = std::frexp(c_max / c, &e);
    if (ratio == 0.5 && e - 1 <= 30) {
      squarings.push_back(e - 1);
    } else {
      other_widths.push_back(-1.0 / (2.0 * c * sigma2));
    }
  }
  const double inv_count = 1.0 / static_cast<double>(config.bandwidth_multipliers.size());
  // Neumaier-compensated so the three block sums agree to a few ulps.
  auto kernel_sum = [&](std::span<const double> d2) {
    double s = 0.0, comp = 0.0;
    for (double d : d2) {
      double k = 0.0;
      const double base = std::exp(d * base_width);
      for (int q : squarings) {
        double v = base;
        for (int i = 0; i < q; ++i) v *= v;
        k += v;
      }
      for (double w : other_widths) k += std::exp(d * w);
      const double term = k * inv_count;
      const double t = s + term;
      comp += std::abs(s) >= std::abs(term) ? (s - t) + term : (term - t) + s;
      s = t;
    }
    return s + comp;
  };

  const double md = static_cast<double>(m), nd = static_cast<double>(n);
  // V-statistic: diagonal terms contribute k(x, x) = 1.
  const double k_aa = (md + 2.0 * kernel_sum(d_aa)) / (md * md);
  const double k_bb = (nd + 2.0 * kernel_sum(d_bb)) / (nd * nd);
  const double k_ab = kernel_sum(d_ab) / (md * nd);
  const double mmd2 = k_aa + k_bb - 2.0 * k_ab;
  // Below this the estimate is rounding noise.
  const double noise = 16.0 * std::numeric_limits<double>::epsilon() * (k_aa + k_bb);
  return mmd2 <= noise ? 0.0 : std::sqrt(mmd2);
}

std::size_t argmax_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

double mean_domain_entropy(const ModelBundle& model, const Dataset& ds) {
  return mean_entropy(forward_all(model, ds).preds);
}

double target_accuracy(const ModelBundle& model, const Dataset& ds) {
  if (ds.count(Domain::Target) == 0) {
    throw std::invalid_argument("target_accuracy: no target samples");
  }
  return accuracy(forward_all(model, ds).log_probs, ds);
}

Diagnostics diagnose(const ModelBundle& model, const Dataset& ds, const MmdConfig& config) {
  const auto fw = forward_all(model, ds);
  Diagnostics d;
  d.mean_domain_entropy = mean_entropy(fw.preds);
  d.mmd = mmd(rows_of(fw.features, ds, Domain::Source), rows_of(fw.features, ds, Domain::Target),
              config);
  d.target_accuracy = accuracy(fw.log_probs, ds);
  return d;
}

Tensor dataset_features(const ModelBundle& model, const Dataset& ds) {
  return forward_all(model, ds).features;
}

}  // namespace rada
