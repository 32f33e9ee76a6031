#pragma once

// Training loop: Adam, plateau learning-rate schedule on validation loss,
// checkpoints whenever validation loss drops or validation IoU rises, and
// early stopping once neither has improved for a configured number of epochs.

#include "fusegnet/augment.hpp"
#include "fusegnet/dataio.hpp"
#include "fusegnet/losses.hpp"
#include "fusegnet/network.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace fusegnet {

struct TrainSettings {
  double initial_lr = 1e-4;
  double weight_decay = 1e-5;
  double plateau_factor = 0.1;
  int plateau_patience = 10;
  int max_epochs = 200;
  int batch_size = 2;
  int early_stop_patience = 30;
  uint64_t seed = 0;
  // Share of samples held out for validation when no fold is given.
  double holdout_fraction = 0.1;
  double threshold = 0.5;  // binarization for validation IoU

  bool operator==(const TrainSettings&) const = default;
};

// Throws ConfigError naming the first invalid field.
void validate(const TrainSettings& ts);

struct TrainState {
  double current_lr = 1e-4;
  int epochs_since_loss_improvement = 0;
  int epochs_since_any_improvement = 0;
  int epoch = 0;  // completed epochs
  double best_loss = std::numeric_limits<double>::infinity();
  double best_iou = -std::numeric_limits<double>::infinity();

  static TrainState initial(const TrainSettings& ts);
};

// Tracks the best validation loss; after `plateau_patience` consecutive
// epochs without a strict decrease the rate is multiplied by
// `plateau_factor` and the counter restarts.
TrainState plateau_step(TrainState state, double val_loss, const TrainSettings& ts);

bool checkpoint_decision(double prev_best_loss, double prev_best_iou, double val_loss,
                         double val_iou);

bool early_stop_decision(int epochs_since_any_improvement, const TrainSettings& ts);

struct EpochDecision {
  bool save = false;
  bool stop = false;
  double lr_used = 0.0;  // rate in effect during the epoch
};

// Full end-of-epoch bookkeeping: checkpoint decision, plateau step, counters
// and bests. `state` is updated in place.
EpochDecision end_of_epoch(TrainState& state, double val_loss, double val_iou,
                           const TrainSettings& ts);

struct CheckpointRecord {
  static constexpr int kFormatVersion = 1;

  std::filesystem::path weights_path;  // empty for in-memory records
  int epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double best_val_iou = -std::numeric_limits<double>::infinity();
  double val_loss = 0.0;  // scores of the checkpointed epoch
  double val_iou = 0.0;
  TrainSettings settings;
  LossSettings loss;
  NetworkConfig network;
  std::optional<int> fold;
};

// Writes the weights to `path` and the metadata to `path` + ".json".
void save_checkpoint(FUSegNet& model, CheckpointRecord& record,
                     const std::filesystem::path& path);
// Reads only the metadata sidecar of a checkpoint.
CheckpointRecord load_checkpoint_record(const std::filesystem::path& path);
// Rebuilds the network from the sidecar and loads the weights.
FUSegNet load_checkpoint_model(const CheckpointRecord& record);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_iou = 0.0;
  double lr = 0.0;
  bool saved = false;
};

// Header: epoch,train_loss,val_loss,val_iou,lr,saved
void write_epoch_csv(const std::vector<EpochLog>& logs, const std::filesystem::path& path);

struct TrainObserver {
  // Called for every sample fed to the optimizer.
  std::function<void(const std::string& id, int epoch, bool augmented)> on_train_sample;
  // Called for every validation sample; `grad_enabled` reports autograd state.
  std::function<void(const std::string& id, int epoch, bool grad_enabled)> on_validation_sample;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainOptions {
  NetworkConfig network;
  LossSettings loss;
  TrainSettings settings;
  AugmentationPlan augmentation = AugmentationPlan::standard();
  // When set, checkpoint.pt(+.json) and epochs.csv are written here.
  std::optional<std::filesystem::path> output_dir;
  TrainObserver observer;
};

struct TrainResult {
  CheckpointRecord checkpoint;
  std::vector<EpochLog> history;
  FUSegNet model{nullptr};  // holds the checkpointed weights
};

// Trains on `train` and validates on `validation` each epoch.
TrainResult train_split(const std::vector<SampleRecord>& train,
                        const std::vector<SampleRecord>& validation, const TrainOptions& options,
                        std::optional<int> fold = std::nullopt);

// Validates on fold `fold` of the manifest and trains on the rest.
TrainResult train_fold(const std::vector<SampleRecord>& records, const FoldManifest& manifest,
                       int fold, const TrainOptions& options);

// Seeded split: the first ceil(fraction * n) shuffled ids (at least one)
// validate, the rest train.
std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> holdout_split(
    const std::vector<SampleRecord>& records, double fraction, uint64_t seed);

struct ValidationScores {
  double loss = 0.0;
  double iou = 0.0;
};

// Mean hybrid loss and data-based IoU of a model over samples (no augmentation,
// no gradients).
ValidationScores evaluate_samples(FUSegNet& model, const std::vector<SampleRecord>& samples,
                                  const LossSettings& loss, const TrainSettings& ts,
                                  const NormalizationStats& stats, int epoch = 0,
                                  const TrainObserver* observer = nullptr);

}  // namespace fusegnet
