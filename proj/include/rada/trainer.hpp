#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rada/checkpoint.hpp"
#include "rada/config.hpp"
#include "rada/controller.hpp"
#include "rada/datasets.hpp"
#include "rada/diagnostics.hpp"
#include "rada/models.hpp"
#include "rada/optim.hpp"
#include "rada/rng.hpp"

namespace rada {

/// Raised when a loss turns non-finite.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::size_t epoch, std::size_t batch, const std::string& what);
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

/// The dataset a config describes (generator seeded from the Data stream).
Dataset make_dataset(const RunConfig& cfg);

/// Per-batch quantities, exposed for tests.
struct BatchResult {
  double loss_cls = 0.0;
  double loss_adv = 0.0;
  std::size_t target_rows = 0;   // original target samples in the batch
  std::size_t relabeled = 0;     // of which trained under the source label
  std::size_t mixed = 0;
  bool degenerate = false;
};

class Trainer {
 public:
  Trainer(RunConfig cfg, Dataset data);

  /// Adopt a checkpoint taken from a run with the same config hash.
  void restore(const Checkpoint& ckpt);
  Checkpoint checkpoint() const;

  /// One optimizer step on `batch` at training progress `progress` in [0, 1].
  BatchResult train_batch(const Batch& batch, double progress);
  /// Next epoch: batches, diagnostics, controller update.
  MetricsRow train_epoch();

  const RunConfig& config() const { return cfg_; }
  const Dataset& data() const { return data_; }
  const ModelBundle& model() const { return model_; }
  ModelBundle& model() { return model_; }
  const RadaState& rada_state() const { return rada_; }
  RadaState& rada_state() { return rada_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t degenerate_batches() const { return degenerate_; }

 private:
  RunConfig cfg_;
  Dataset data_;
  ModelBundle model_;
  OptimizerState opt_;
  RadaState rada_;
  Rng shuffle_rng_;
  Rng mixup_rng_;
  std::vector<std::uint8_t> persistent_;
  std::size_t epoch_ = 0;
  std::size_t batch_in_epoch_ = 0;
  std::size_t degenerate_ = 0;
};

/// Model stored in a checkpoint; layer sizes follow its config and `data`.
ModelBundle model_from_checkpoint(const Checkpoint& ckpt, const Dataset& data);

std::string metrics_header();
std::string format_metrics_row(const MetricsRow& row);
MetricsRow parse_metrics_row(std::string_view line);

struct RunOptions {
  bool write_files = true;
  std::optional<std::filesystem::path> resume_from;
  std::ostream* progress = nullptr;  // one line per epoch when set
};

struct RunResult {
  std::vector<MetricsRow> rows;  // rows produced by this invocation
  ModelBundle model;
  RadaState rada;
};

/// Train cfg.epochs epochs (or the remainder after `resume_from`). With
/// write_files, output_dir receives config.cfg, metrics.csv,
/// checkpoint_epoch_NNNN.bin every checkpoint_every epochs and checkpoint.bin.
RunResult run_training(const RunConfig& cfg, const RunOptions& options = {});

}  // namespace rada
