#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rada/controller.hpp"
#include "rada/tensor.hpp"

namespace rada {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Complete training state at an epoch boundary. The binary layout is
/// described in README.md.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t config_hash = 0;
  std::string config_text;
  std::uint64_t epoch = 0;  // epochs completed
  std::vector<std::string> names;
  std::vector<Tensor> params;
  std::vector<Tensor> velocities;
  RadaState rada{};
  std::string shuffle_rng;
  std::string mixup_rng;
  std::vector<std::uint8_t> persistent_relabel;  // one flag per dataset sample, or empty

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
/// Throws std::runtime_error on bad magic, version mismatch, truncation,
/// missing entries or inconsistent shapes.
Checkpoint read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rada
