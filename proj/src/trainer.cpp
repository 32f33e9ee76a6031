#include "fusegnet/trainer.hpp"

#include "fusegnet/config.hpp"
#include "fusegnet/error.hpp"
#include "fusegnet/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace fusegnet {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Snapshot {
  std::vector<torch::Tensor> tensors;

  static Snapshot take(torch::nn::Module& module) {
    Snapshot s;
    for (const auto& p : module.parameters()) s.tensors.push_back(p.detach().clone());
    for (const auto& b : module.buffers()) s.tensors.push_back(b.detach().clone());
    return s;
  }

  void restore(torch::nn::Module& module) const {
    torch::NoGradGuard guard;
    std::size_t i = 0;
    for (auto& p : module.parameters()) p.copy_(tensors[i++]);
    for (auto& b : module.buffers()) b.copy_(tensors[i++]);
  }
};

void set_learning_rate(torch::optim::Optimizer& optimizer, double lr) {
  for (auto& group : optimizer.param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
}

struct Batch {
  torch::Tensor images;
  torch::Tensor masks;
};

Batch stack_batch(const std::vector<TensorSample>& samples, const std::vector<std::string>& ids) {
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (samples[i].image.sizes() != samples[0].image.sizes()) {
      throw ShapeError("samples '" + ids[0] + "' and '" + ids[i] +
                       "' differ in size and cannot share a batch");
    }
  }
  std::vector<torch::Tensor> images;
  std::vector<torch::Tensor> masks;
  for (const auto& s : samples) {
    images.push_back(s.image);
    masks.push_back(s.mask);
  }
  return Batch{torch::stack(images), torch::stack(masks)};
}

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) out += (out.empty() ? "" : ", ") + id;
  return out;
}

}  // namespace

void validate(const TrainSettings& ts) {
  if (!(ts.initial_lr > 0.0)) throw ConfigError("train.initial_lr must be > 0");
  if (!(ts.weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (!(ts.plateau_factor > 0.0 && ts.plateau_factor < 1.0)) {
    throw ConfigError("train.plateau_factor must lie in (0, 1)");
  }
  if (ts.plateau_patience < 1) throw ConfigError("train.plateau_patience must be >= 1");
  if (ts.early_stop_patience < 1) throw ConfigError("train.early_stop_patience must be >= 1");
  if (ts.plateau_patience >= ts.early_stop_patience) {
    throw ConfigError("train.plateau_patience must be below train.early_stop_patience");
  }
  if (ts.max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
  if (ts.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(ts.holdout_fraction > 0.0 && ts.holdout_fraction < 1.0)) {
    throw ConfigError("train.holdout_fraction must lie in (0, 1)");
  }
  if (!(ts.threshold > 0.0 && ts.threshold <= 1.0)) {
    throw ConfigError("train.threshold must lie in (0, 1]");
  }
}

TrainState TrainState::initial(const TrainSettings& ts) {
  TrainState s;
  s.current_lr = ts.initial_lr;
  return s;
}

TrainState plateau_step(TrainState state, double val_loss, const TrainSettings& ts) {
  if (val_loss < state.best_loss) {
    state.best_loss = val_loss;
    state.epochs_since_loss_improvement = 0;
    return state;
  }
  if (++state.epochs_since_loss_improvement >= ts.plateau_patience) {
    state.current_lr *= ts.plateau_factor;
    state.epochs_since_loss_improvement = 0;
  }
  return state;
}

bool checkpoint_decision(double prev_best_loss, double prev_best_iou, double val_loss,
                         double val_iou) {
  return val_loss < prev_best_loss || val_iou > prev_best_iou;
}

bool early_stop_decision(int epochs_since_any_improvement, const TrainSettings& ts) {
  return epochs_since_any_improvement >= ts.early_stop_patience;
}

EpochDecision end_of_epoch(TrainState& state, double val_loss, double val_iou,
                           const TrainSettings& ts) {
  if (!std::isfinite(val_loss) || !std::isfinite(val_iou)) {
    throw TrainingError("non-finite validation scores at epoch " +
                        std::to_string(state.epoch + 1));
  }
  EpochDecision d;
  d.lr_used = state.current_lr;
  d.save = checkpoint_decision(state.best_loss, state.best_iou, val_loss, val_iou);
  const bool iou_improved = val_iou > state.best_iou;
  state = plateau_step(state, val_loss, ts);
  if (iou_improved) state.best_iou = val_iou;
  state.epochs_since_any_improvement = d.save ? 0 : state.epochs_since_any_improvement + 1;
  ++state.epoch;
  d.stop = early_stop_decision(state.epochs_since_any_improvement, ts);
  return d;
}

void save_checkpoint(FUSegNet& model, CheckpointRecord& record, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  torch::save(model, path.string());
  record.weights_path = path;
  Json meta{{"format_version", CheckpointRecord::kFormatVersion},
            {"weights", path.filename().string()},
            {"epoch", record.epoch},
            {"best_val_loss", record.best_val_loss},
            {"best_val_iou", record.best_val_iou},
            {"val_loss", record.val_loss},
            {"val_iou", record.val_iou},
            {"fold", record.fold ? Json(*record.fold) : Json(nullptr)},
            {"settings", to_json(record.settings)},
            {"loss", to_json(record.loss)},
            {"network", to_json(record.network)}};
  const fs::path sidecar = path.string() + ".json";
  std::ofstream out(sidecar);
  if (!out) throw DataError("cannot write " + sidecar.string());
  out << meta.dump(2) << '\n';
  if (!out) throw DataError("cannot write " + sidecar.string());
}

CheckpointRecord load_checkpoint_record(const fs::path& path) {
  fs::path weights = path;
  if (weights.extension() == ".json") weights.replace_extension();
  const fs::path sidecar = weights.string() + ".json";
  std::ifstream in(sidecar);
  if (!in) throw DataError("cannot read checkpoint metadata " + sidecar.string());
  Json meta;
  try {
    meta = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(sidecar.string() + ": " + e.what());
  }
  try {
    if (meta.at("format_version").get<int>() != CheckpointRecord::kFormatVersion) {
      throw DataError(sidecar.string() + ": unsupported format_version");
    }
    CheckpointRecord r;
    r.weights_path = weights;
    r.epoch = meta.at("epoch").get<int>();
    // JSON has no infinities; a null best means nothing was recorded yet
    const auto best = [&](const char* key, double none) {
      const Json& v = meta.at(key);
      return v.is_null() ? none : v.get<double>();
    };
    r.best_val_loss = best("best_val_loss", std::numeric_limits<double>::infinity());
    r.best_val_iou = best("best_val_iou", -std::numeric_limits<double>::infinity());
    r.val_loss = meta.at("val_loss").get<double>();
    r.val_iou = meta.at("val_iou").get<double>();
    if (!meta.at("fold").is_null()) r.fold = meta.at("fold").get<int>();
    r.settings = train_from_json(meta.at("settings"), "settings");
    r.loss = loss_from_json(meta.at("loss"), "loss");
    r.network = network_from_json(meta.at("network"), "network");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(sidecar.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(sidecar.string() + ": " + e.what());
  }
}

FUSegNet load_checkpoint_model(const CheckpointRecord& record) {
  NetworkConfig cfg = record.network;
  cfg.pretrained = false;  // the checkpoint carries every weight
  FUSegNet model(cfg);
  if (!fs::exists(record.weights_path)) {
    throw DataError("missing checkpoint weights " + record.weights_path.string());
  }
  try {
    torch::load(model, record.weights_path.string());
  } catch (const c10::Error& e) {
    throw DataError("cannot load checkpoint " + record.weights_path.string() + ": " +
                    e.what_without_backtrace());
  }
  model->eval();
  return model;
}

void write_epoch_csv(const std::vector<EpochLog>& logs, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,train_loss,val_loss,val_iou,lr,saved\n";
  for (const auto& l : logs) {
    out << l.epoch << ',' << num(l.train_loss) << ',' << num(l.val_loss) << ',' << num(l.val_iou)
        << ',' << num(l.lr) << ',' << (l.saved ? 1 : 0) << '\n';
  }
  if (!out) throw DataError("cannot write " + path.string());
}

ValidationScores evaluate_samples(FUSegNet& model, const std::vector<SampleRecord>& samples,
                                  const LossSettings& loss, const TrainSettings& ts,
                                  const NormalizationStats& stats, int epoch,
                                  const TrainObserver* observer) {
  if (samples.empty()) throw DataError("validation split is empty");
  model->eval();
  torch::NoGradGuard no_grad;
  double loss_sum = 0.0;
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  const auto bs = static_cast<std::size_t>(ts.batch_size);
  for (std::size_t start = 0; start < samples.size(); start += bs) {
    std::vector<TensorSample> tensors;
    std::vector<std::string> ids;
    for (std::size_t i = start; i < std::min(samples.size(), start + bs); ++i) {
      if (observer != nullptr && observer->on_validation_sample) {
        observer->on_validation_sample(samples[i].id, epoch, torch::GradMode::is_enabled());
      }
      tensors.push_back(preprocess(samples[i], stats));
      ids.push_back(samples[i].id);
    }
    auto batch = stack_batch(tensors, ids);
    auto pred = model->forward(batch.images);
    const double l = hybrid_loss(pred, batch.masks, loss).item<double>();
    if (!std::isfinite(l)) throw TrainingError("non-finite validation loss on " + join_ids(ids));
    loss_sum += l * static_cast<double>(ids.size());
    auto p = pred >= ts.threshold;
    auto g = batch.masks > 0.5;
    tp += torch::logical_and(p, g).sum().item<int64_t>();
    fp += torch::logical_and(p, g.logical_not()).sum().item<int64_t>();
    fn += torch::logical_and(p.logical_not(), g).sum().item<int64_t>();
  }
  const int64_t den = tp + fp + fn;
  return ValidationScores{loss_sum / static_cast<double>(samples.size()),
                          den == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(den)};
}

TrainResult train_split(const std::vector<SampleRecord>& train,
                        const std::vector<SampleRecord>& validation, const TrainOptions& options,
                        std::optional<int> fold) {
  const auto& ts = options.settings;
  validate(ts);
  validate(options.loss);
  validate(options.network);
  validate(options.augmentation);
  if (train.empty()) throw DataError("training split is empty");
  if (validation.empty()) throw DataError("validation split is empty");
  {
    std::set<std::string> train_ids;
    for (const auto& r : train) train_ids.insert(r.id);
    for (const auto& r : validation) {
      if (train_ids.contains(r.id)) {
        throw ContractError("sample '" + r.id + "' is in both the training and validation splits");
      }
    }
  }

  torch::manual_seed(ts.seed);
  FUSegNet model(options.network);
  const auto stats = encoder_normalization(options.network.encoder_name);
  torch::optim::Adam optimizer(
      model->parameters(), torch::optim::AdamOptions(ts.initial_lr).weight_decay(ts.weight_decay));

  const TrainObserver& obs = options.observer;
  TrainState state = TrainState::initial(ts);
  TrainResult result;
  result.checkpoint.settings = ts;
  result.checkpoint.loss = options.loss;
  result.checkpoint.network = options.network;
  result.checkpoint.fold = fold;
  Snapshot best;

  std::optional<fs::path> checkpoint_path;
  if (options.output_dir) {
    fs::create_directories(*options.output_dir);
    checkpoint_path = *options.output_dir / "checkpoint.pt";
  }

  std::vector<std::size_t> order(train.size());
  const auto bs = static_cast<std::size_t>(ts.batch_size);
  for (int epoch = 1; epoch <= ts.max_epochs; ++epoch) {
    model->train();
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed(ts.seed, "#order", static_cast<uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<TensorSample> tensors;
      std::vector<std::string> ids;
      for (std::size_t k = start; k < std::min(order.size(), start + bs); ++k) {
        const auto& record = train[order[k]];
        AugmentationTrace trace;
        const auto sample = augment(record, options.augmentation,
                                    derive_seed(ts.seed, record.id, static_cast<uint64_t>(epoch)),
                                    &trace);
        if (obs.on_train_sample) obs.on_train_sample(record.id, epoch, !trace.identity());
        tensors.push_back(preprocess(sample, stats));
        ids.push_back(record.id);
      }
      auto batch = stack_batch(tensors, ids);
      auto pred = model->forward(batch.images);
      auto loss = hybrid_loss(pred, batch.masks, options.loss);
      const double value = loss.item<double>();
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) +
                            " on " + join_ids(ids));
      }
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
      loss_sum += value * static_cast<double>(ids.size());
    }

    const auto scores = evaluate_samples(model, validation, options.loss, ts, stats, epoch, &obs);
    const auto decision = end_of_epoch(state, scores.loss, scores.iou, ts);
    if (decision.save) {
      best = Snapshot::take(*model);
      auto& cp = result.checkpoint;
      cp.epoch = epoch;
      cp.val_loss = scores.loss;
      cp.val_iou = scores.iou;
      cp.best_val_loss = state.best_loss;
      cp.best_val_iou = state.best_iou;
      if (checkpoint_path) save_checkpoint(model, cp, *checkpoint_path);
    }
    set_learning_rate(optimizer, state.current_lr);

    EpochLog log{epoch, loss_sum / static_cast<double>(train.size()), scores.loss, scores.iou,
                 decision.lr_used, decision.save};
    result.history.push_back(log);
    if (options.output_dir) write_epoch_csv(result.history, *options.output_dir / "epochs.csv");
    if (obs.on_epoch) obs.on_epoch(log);
    if (decision.stop) break;
  }

  best.restore(*model);
  model->eval();
  result.model = model;
  return result;
}

TrainResult train_fold(const std::vector<SampleRecord>& records, const FoldManifest& manifest,
                       int fold, const TrainOptions& options) {
  if (fold < 0 || fold >= manifest.k) {
    throw ConfigError("fold " + std::to_string(fold) + " is outside [0, " +
                      std::to_string(manifest.k) + ")");
  }
  if (records.empty()) throw DataError("dataset is empty");
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> validation;
  for (const auto& r : records) {
    auto it = manifest.assignment.find(r.id);
    if (it == manifest.assignment.end()) {
      throw DataError("sample '" + r.id + "' is missing from the fold manifest");
    }
    (it->second == fold ? validation : train).push_back(r);
  }
  return train_split(train, validation, options, fold);
}

std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> holdout_split(
    const std::vector<SampleRecord>& records, double fraction, uint64_t seed) {
  if (records.size() < 2) throw DataError("a holdout split needs at least two samples");
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must lie in (0, 1)");
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.id);
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  auto n_val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(ids.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, ids.size() - 1);
  const std::set<std::string> val_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> split;
  for (const auto& r : records) (val_ids.contains(r.id) ? split.second : split.first).push_back(r);
  return split;
}

}  // namespace fusegnet
