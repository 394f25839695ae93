#include "rada/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace rada {

std::size_t Dataset::count(Domain d) const {
  return static_cast<std::size_t>(std::count(domain_labels.begin(), domain_labels.end(), d));
}

std::vector<std::size_t> Dataset::indices_of(Domain d) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (domain_labels[i] == d) out.push_back(i);
  }
  return out;
}

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
  std::vector<double> data;
  data.reserve(indices.size() * feature_dim);
  for (auto i : indices) {
    auto r = row(i);
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({indices.size(), feature_dim}, std::move(data));
}

Tensor Dataset::all_features() const { return Tensor({size(), feature_dim}, features); }

void Dataset::validate() const {
  const std::size_t n = size();
  if (feature_dim == 0) throw std::invalid_argument("dataset: feature dimension is zero");
  if (features.size() != n * feature_dim || class_labels.size() != n) {
    throw std::invalid_argument("dataset: per-sample arrays disagree on sample count");
  }
  for (auto c : class_labels) {
    if (c >= num_classes) {
      throw std::invalid_argument("dataset: class label " + std::to_string(c) +
                                  " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

void Dataset::validate_for_training() const {
  validate();
  if (count(Domain::Source) == 0 || count(Domain::Target) == 0) {
    throw std::invalid_argument("dataset: training needs both source and target samples (have " +
                                std::to_string(count(Domain::Source)) + " source, " +
                                std::to_string(count(Domain::Target)) + " target)");
  }
}

std::array<double, 2> AffineSpec::apply(double x, double y) const {
  const double th = rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  return {scale * (c * x - s * y) + shift_x, scale * (s * x + c * y) + shift_y};
}

Dataset generate_moons(const MoonsSpec& spec, std::uint64_t seed) {
  if (spec.n_per_domain < 2 || spec.n_per_domain % 2 != 0) {
    throw std::invalid_argument("moons: n_per_domain must be even and >= 2");
  }
  if (!(spec.noise_sigma >= 0.0)) throw std::invalid_argument("moons: noise_sigma must be >= 0");
  Rng rng(seed);
  const AffineSpec shift{spec.rotation_deg, 1.0, spec.shift_x, spec.shift_y};
  Dataset ds;
  ds.feature_dim = 2;
  ds.num_classes = 2;
  for (Domain d : {Domain::Source, Domain::Target}) {
    for (std::size_t i = 0; i < spec.n_per_domain; ++i) {
      const std::size_t label = i % 2;
      const double t = rng.uniform(0.0, std::numbers::pi);
      double x = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
      double y = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
      x += spec.noise_sigma * rng.normal();
      y += spec.noise_sigma * rng.normal();
      if (d == Domain::Target) {
        const auto moved = shift.apply(x, y);
        x = moved[0];
        y = moved[1];
      }
      ds.features.push_back(x);
      ds.features.push_back(y);
      ds.class_labels.push_back(label);
      ds.domain_labels.push_back(d);
    }
  }
  return ds;
}

BlobMeans blob_means(const BlobsSpec& spec) {
  BlobMeans m;
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(k) /
                     static_cast<double>(spec.num_classes);
    const double x = spec.class_mean_radius * std::cos(a);
    const double y = spec.class_mean_radius * std::sin(a);
    m.source.push_back({x, y});
    m.target.push_back(spec.target_affine.apply(x, y));
  }
  return m;
}

Dataset generate_blobs(const BlobsSpec& spec, std::uint64_t seed) {
  if (spec.num_classes < 2) throw std::invalid_argument("blobs: num_classes must be >= 2");
  if (spec.n_per_class_per_domain == 0) {
    throw std::invalid_argument("blobs: n_per_class_per_domain must be positive");
  }
  if (!(spec.noise_sigma >= 0.0) || !(spec.class_mean_radius >= 0.0)) {
    throw std::invalid_argument("blobs: radius and noise must be nonnegative");
  }
  if (!(spec.target_affine.scale > 0.0)) throw std::invalid_argument("blobs: scale must be positive");
  const auto means = blob_means(spec);
  Rng rng(seed);
  Dataset ds;
  ds.feature_dim = 2;
  ds.num_classes = spec.num_classes;
  for (Domain d : {Domain::Source, Domain::Target}) {
    const auto& mu = d == Domain::Source ? means.source : means.target;
    for (std::size_t i = 0; i < spec.n_per_class_per_domain; ++i) {
      for (std::size_t k = 0; k < spec.num_classes; ++k) {
        ds.features.push_back(mu[k][0] + spec.noise_sigma * rng.normal());
        ds.features.push_back(mu[k][1] + spec.noise_sigma * rng.normal());
        ds.class_labels.push_back(k);
        ds.domain_labels.push_back(d);
      }
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

[[noreturn]] void csv_error(std::size_t line, const std::string& what) {
  throw std::runtime_error("dataset csv line " + std::to_string(line) + ": " + what);
}

std::vector<std::string_view> split_commas(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

void write_dataset_csv(std::ostream& os, const Dataset& ds) {
  ds.validate();
  os << "domain,label";
  for (std::size_t j = 0; j < ds.feature_dim; ++j) os << ",f" << j;
  os << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    os << domain_tag(ds.domain_labels[i]) << ',' << ds.class_labels[i];
    for (double v : ds.row(i)) os << ',' << format_double(v);
    os << '\n';
  }
}

Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) csv_error(1, "empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  if (header.size() < 3 || header[0] != "domain" || header[1] != "label") {
    csv_error(1, "header must be `domain,label,f0,...`");
  }
  Dataset ds;
  ds.feature_dim = header.size() - 2;
  for (std::size_t j = 0; j < ds.feature_dim; ++j) {
    if (header[j + 2] != "f" + std::to_string(j)) {
      csv_error(1, "expected column f" + std::to_string(j) + ", got `" +
                       std::string(header[j + 2]) + "`");
    }
  }
  const std::size_t columns = header.size();  // header views die with `line`
  std::size_t lineno = 1;
  std::size_t max_label = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (is.peek() == std::char_traits<char>::eof()) break;
      csv_error(lineno, "blank line");
    }
    const auto fields = split_commas(line);
    if (fields.size() != columns) {
      csv_error(lineno, "expected " + std::to_string(columns) + " fields, got " +
                            std::to_string(fields.size()));
    }
    if (fields[0] == "s") {
      ds.domain_labels.push_back(Domain::Source);
    } else if (fields[0] == "t") {
      ds.domain_labels.push_back(Domain::Target);
    } else {
      csv_error(lineno, "unknown domain tag `" + std::string(fields[0]) + "`");
    }
    std::size_t label = 0;
    {
      const auto f = fields[1];
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), label);
      if (ec != std::errc() || p != f.data() + f.size() || f.empty()) {
        csv_error(lineno, "label `" + std::string(f) + "` is not a nonnegative integer");
      }
    }
    max_label = std::max(max_label, label);
    ds.class_labels.push_back(label);
    for (std::size_t j = 2; j < fields.size(); ++j) {
      const auto f = fields[j];
      double v = 0.0;
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || p != f.data() + f.size() || f.empty() || !std::isfinite(v)) {
        csv_error(lineno, "non-numeric feature `" + std::string(f) + "`");
      }
      ds.features.push_back(v);
    }
  }
  ds.num_classes = ds.size() == 0 ? 0 : std::max<std::size_t>(2, max_label + 1);
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_dataset_csv(os, ds);
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_dataset_csv(is);
}

// ---------------------------------------------------------------------------
// Batching

std::size_t Batch::count_working(Domain d) const {
  return static_cast<std::size_t>(std::count(working_domain.begin(), working_domain.end(), d));
}

std::vector<std::size_t> Batch::working_target_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (working_domain[i] == Domain::Target) out.push_back(i);
  }
  return out;
}

Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("make_batch: no samples");
  Batch b;
  b.features = ds.gather(indices);
  for (auto i : indices) {
    if (i >= ds.size()) throw std::out_of_range("make_batch: sample index out of range");
    b.class_labels.push_back(ds.class_labels[i]);
    b.original_domain.push_back(ds.domain_labels[i]);
    b.class_mask.push_back(ds.domain_labels[i] == Domain::Source);
    b.dataset_index.push_back(i);
  }
  b.working_domain = b.original_domain;
  return b;
}

namespace {

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.uniform_index(i)]);
  }
}

}  // namespace

std::vector<Batch> make_batches(const Dataset& ds, std::size_t batch_size, Rng& rng) {
  if (batch_size < 4 || batch_size % 2 != 0) {
    throw std::invalid_argument("make_batches: batch_size must be even and >= 4");
  }
  auto src = ds.indices_of(Domain::Source);
  auto tgt = ds.indices_of(Domain::Target);
  if (src.empty() || tgt.empty()) throw std::invalid_argument("make_batches: empty domain");
  shuffle(src, rng);
  shuffle(tgt, rng);
  const std::size_t half = batch_size / 2;
  const std::size_t longest = std::max(src.size(), tgt.size());
  const std::size_t batches = (longest + half - 1) / half;
  std::vector<Batch> out;
  out.reserve(batches);
  std::vector<std::size_t> idx(batch_size);
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t k = 0; k < half; ++k) {
      idx[k] = src[(b * half + k) % src.size()];
      idx[half + k] = tgt[(b * half + k) % tgt.size()];
    }
    out.push_back(make_batch(ds, idx));
  }
  return out;
}

}  // namespace rada
