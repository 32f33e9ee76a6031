#pragma once

// JSON (de)serialization of every settings struct plus the run configuration
// document. Parsing is strict: unknown keys and ill-typed values throw
// ConfigError naming the dotted path of the offending field.

#include "fusegnet/augment.hpp"
#include "fusegnet/losses.hpp"
#include "fusegnet/metrics.hpp"
#include "fusegnet/network.hpp"
#include "fusegnet/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace fusegnet {

using Json = nlohmann::ordered_json;

Json to_json(const ScseSettings& s);
Json to_json(const NetworkConfig& c);
Json to_json(const LossSettings& s);
Json to_json(const TrainSettings& s);
Json to_json(const AugmentationPlan& p);
Json to_json(const CategorySpec& s);

// `where` prefixes error messages (e.g. "network").
ScseSettings scse_from_json(const Json& j, const std::string& where);
NetworkConfig network_from_json(const Json& j, const std::string& where);
LossSettings loss_from_json(const Json& j, const std::string& where);
TrainSettings train_from_json(const Json& j, const std::string& where);
// Accepts an object, or the strings "standard" and "none".
AugmentationPlan augmentation_from_json(const Json& j, const std::string& where);
CategorySpec categories_from_json(const Json& j, const std::string& where);

struct DataConfig {
  std::filesystem::path images_dir;
  std::filesystem::path masks_dir;
  // Existing fold manifest; when empty, folds are made from `folds` and the
  // global seed and saved under the output directory.
  std::filesystem::path manifest;
  int folds = 5;
};

struct RunConfig {
  static constexpr int kSchemaVersion = 1;

  uint64_t seed = 0;
  std::filesystem::path output_dir = "runs";
  DataConfig data;
  NetworkConfig network;
  LossSettings loss;
  TrainSettings train;
  AugmentationPlan augmentation = AugmentationPlan::standard();
  CategorySpec categories;
};

// Relative paths resolve against the directory of the configuration file.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base_dir);
Json to_json(const RunConfig& c);

}  // namespace fusegnet
