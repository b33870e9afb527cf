#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mmcl/data.hpp"
#include "mmcl/encoder.hpp"
#include "mmcl/eval.hpp"
#include "mmcl/kernels.hpp"
#include "mmcl/loss.hpp"
#include "mmcl/svm.hpp"

namespace mmcl {

enum class LossKind { mmcl_pgd, mmcl_inv, nce };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

// Step change applied from `epoch` on (0-based epoch index): either sets the
// field to `value` or multiplies the value in effect by it.
struct ScheduleEntry {
  std::size_t epoch = 0;
  std::string field;  // C | sigma_sq | gamma | bias
  bool multiply = false;
  double value = 0.0;

  bool operator==(const ScheduleEntry&) const = default;
};

struct DataConfig {
  std::string source = "blobs";  // blobs | moons | file
  std::string path;              // used when source = file
  int num_classes = 4;
  int per_class = 100;
  int dim = 16;
  double separation = 6.0;
  double noise = 0.1;
  std::uint64_t seed = 0;

  bool operator==(const DataConfig&) const = default;
};

struct EvalConfig {
  int every = 0;  // evaluate every n epochs; 0 disables
  int k = 200;
  int probe_epochs = 500;
  double probe_lr = 0.1;
  double split = 0.8;
  EmbeddingSource features = EmbeddingSource::backbone;
  std::uint64_t seed = 0;

  bool operator==(const EvalConfig&) const = default;
};

struct TrainConfig {
  DataConfig data;
  AugmentationSpec aug;
  std::vector<Index> backbone = {64, 64};
  std::vector<Index> head = {64, 32};

  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  LossKind loss = LossKind::mmcl_inv;
  KernelSpec kernel;
  double C = 100.0;
  double beta = 0.1;
  SolverConfig solver;
  bool fn_correction = false;
  Reduction reduction = Reduction::sum;
  double temperature = 0.5;

  std::vector<ScheduleEntry> schedules;
  std::uint64_t seed = 0;
  EvalConfig eval;

  std::string metrics_path = "metrics.csv";
  std::string checkpoint_path = "model.mmcl";

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct Phase {
  double C = 100.0;
  KernelSpec kernel;
};

Phase apply_schedules(const TrainConfig& cfg, std::size_t epoch);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based count of completed epochs
  double C = 0.0;
  double sigma_sq = 0.0;
  double mean_loss = 0.0;
  std::optional<double> knn_accuracy;
  std::optional<double> linear_accuracy;

  bool operator==(const EpochMetrics&) const = default;
};

struct TrainState {
  EncoderParams params;
  AdamState adam;
  std::size_t epoch = 0;  // completed epochs
  std::vector<EpochMetrics> history;
};

struct PreparedData {
  Dataset train;
  std::optional<Dataset> test;
};

Dataset make_dataset(const DataConfig& cfg);

// Labeled data is split into train / test using eval.split and eval.seed;
// training only ever sees the train part.
PreparedData prepare_data(const TrainConfig& cfg);

TrainState init_train_state(const TrainConfig& cfg, Index in_dim);

// The two augmented views of a batch, one column per sample.
struct BatchViews {
  Mat view1;
  Mat view2;
};

BatchViews make_views(const TrainConfig& cfg, const Dataset& ds, const std::vector<Index>& rows, std::size_t epoch,
                      std::size_t batch);

// Rows of each full batch for the given epoch; the partial tail is dropped.
std::vector<std::vector<Index>> epoch_batches(const TrainConfig& cfg, Index dataset_size, std::size_t epoch);

BatchLossOptions batch_options(const TrainConfig& cfg, const Phase& phase, std::size_t epoch, std::size_t batch);

// One pass of shuffled full batches: views -> forward -> loss -> backward ->
// Adam. Throws NonFiniteLoss with a diagnostic dump when the loss diverges.
EpochMetrics run_epoch(TrainState& state, const TrainConfig& cfg, const Dataset& train);

EvalReport evaluate(const EncoderParams& params, const Dataset& train, const Dataset& test, const EvalConfig& cfg,
                    std::ostream* warnings = nullptr);

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Runs epochs until state.epoch == cfg.epochs, evaluating when scheduled.
void train(TrainState& state, const TrainConfig& cfg, const PreparedData& data, const EpochCallback& on_epoch = {});

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const EpochMetrics& m);

// Encoder checkpoint followed by a "TRST" block with Adam moments, epoch
// and history. Written atomically.
void save_checkpoint(const std::string& path, const TrainState& state);
// Plain encoder checkpoints load with a fresh (zero-step) optimizer state.
TrainState load_checkpoint(const std::string& path, double lr = 1e-3);

}  // namespace mmcl
