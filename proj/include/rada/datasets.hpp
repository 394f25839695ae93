#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "rada/domain.hpp"
#include "rada/rng.hpp"
#include "rada/tensor.hpp"

namespace rada {

/// Labeled samples from both domains. Target class labels are carried for
/// evaluation only.
struct Dataset {
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;  // row-major, size() x feature_dim
  std::vector<std::size_t> class_labels;
  std::vector<Domain> domain_labels;

  std::size_t size() const { return domain_labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * feature_dim, feature_dim);
  }
  std::size_t count(Domain d) const;
  std::vector<std::size_t> indices_of(Domain d) const;
  /// Feature rows at `indices` as an [indices.size(), feature_dim] matrix.
  Tensor gather(std::span<const std::size_t> indices) const;
  Tensor all_features() const;

  void validate() const;
  /// validate() plus: both domains nonempty.
  void validate_for_training() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct MoonsSpec {
  std::size_t n_per_domain = 1000;
  double noise_sigma = 0.1;
  double rotation_deg = 45.0;
  double shift_x = 0.5;
  double shift_y = 0.0;
};

struct AffineSpec {
  double rotation_deg = 0.0;
  double scale = 1.0;
  double shift_x = 0.0;
  double shift_y = 0.0;

  std::array<double, 2> apply(double x, double y) const;
};

struct BlobsSpec {
  std::size_t num_classes = 3;
  std::size_t n_per_class_per_domain = 100;
  double class_mean_radius = 3.0;
  double noise_sigma = 0.5;
  AffineSpec target_affine{};
};

/// Two interleaved half circles per domain; the target draw is rotated about
/// the origin, then translated. Classes alternate so each domain is balanced.
Dataset generate_moons(const MoonsSpec& spec, std::uint64_t seed);

struct BlobMeans {
  std::vector<std::array<double, 2>> source;
  std::vector<std::array<double, 2>> target;
};
BlobMeans blob_means(const BlobsSpec& spec);
/// Isotropic Gaussian classes; source means evenly spaced on a circle,
/// target means are their affine image.
Dataset generate_blobs(const BlobsSpec& spec, std::uint64_t seed);

// CSV interchange: header `domain,label,f0,...,f{d-1}`, domain in {s, t},
// 17 significant digits, `\n` line endings.
void write_dataset_csv(std::ostream& os, const Dataset& ds);
Dataset read_dataset_csv(std::istream& is);
void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& path);

/// A mini-batch: source rows first, then target rows.
struct Batch {
  Tensor features;
  std::vector<std::size_t> class_labels;
  std::vector<Domain> original_domain;
  std::vector<Domain> working_domain;   // relabeling edits only this
  std::vector<bool> class_mask;         // original_domain == Source
  std::vector<std::size_t> dataset_index;

  std::size_t size() const { return original_domain.size(); }
  std::size_t count_working(Domain d) const;
  /// Batch positions whose working label is Target, in order.
  std::vector<std::size_t> working_target_positions() const;

  friend bool operator==(const Batch&, const Batch&) = default;
};

Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices);

/// One epoch of batches. Source and target index lists are shuffled
/// independently; each batch takes batch_size/2 from each. The epoch has
/// ceil(max(n_s, n_t) / (batch_size/2)) batches and both lists are read
/// cyclically.
std::vector<Batch> make_batches(const Dataset& ds, std::size_t batch_size, Rng& rng);

}  // namespace rada
