#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rada/controller.hpp"
#include "rada/datasets.hpp"
#include "rada/diagnostics.hpp"
#include "rada/losses.hpp"
#include "rada/models.hpp"

namespace rada {

enum class DatasetKind { Moons, Blobs, Csv };

/// Everything that determines a training run. Parsed from a flat
/// `key = value` file; every key is optional (see config_keys()).
struct RunConfig {
  DatasetKind dataset = DatasetKind::Moons;
  MoonsSpec moons{};
  BlobsSpec blobs{};
  std::string csv_path;

  // input_dim and num_classes are taken from the dataset at run time.
  ModelSpec model{};
  LossConfig loss{};
  RadaConfig rada{};
  bool rada_enabled = true;

  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::uint64_t master_seed = 0;
  std::string output_dir = "run";
  std::size_t checkpoint_every = 25;

  MmdConfig mmd{};
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, std::size_t line, const std::string& what);
  const std::string& key() const { return key_; }
  std::size_t line() const { return line_; }

 private:
  std::string key_;
  std::size_t line_;
};

struct ConfigKey {
  std::string_view name;
  std::string_view help;
};
/// All recognised keys, in the order write_config() emits them.
const std::vector<ConfigKey>& config_keys();

/// Assign one key from its textual value, with type and range checks.
/// Throws ConfigError (line 0 when not from a file).
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value,
                      std::size_t line = 0);
std::string get_config_value(const RunConfig& cfg, std::string_view key);

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
/// Every key, one per line; parse_config(write_config(c)) reproduces c.
std::string write_config(const RunConfig& cfg);

/// FNV-1a over the serialized config, ignoring keys that may differ between
/// a run and its resumption (epochs, output_dir, checkpoint_every).
std::uint64_t config_hash(const RunConfig& cfg);

bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace rada
