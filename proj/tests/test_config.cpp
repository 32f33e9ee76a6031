#include "fusegnet/config.hpp"
#include "fusegnet/error.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace fusegnet;
using namespace fusegnet::testing;

namespace {

Json minimal() {
  return Json::parse(R"({
    "schema_version": 1,
    "seed": 11,
    "data": {"images_dir": "imgs", "masks_dir": "/abs/masks"},
    "network": {"encoder": "efficientnet-b0", "input_size": 64},
    "train": {"max_epochs": 3}
  })");
}

std::string error_of(const Json& j) {
  try {
    run_config_from_json(j, "/base");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(RunConfig, DefaultsAndPathResolution) {
  const auto c = run_config_from_json(minimal(), "/base");
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.train.seed, 11u);
  EXPECT_EQ(c.train.max_epochs, 3);
  EXPECT_EQ(c.train.batch_size, TrainSettings{}.batch_size);
  EXPECT_EQ(c.data.images_dir, std::filesystem::path("/base/imgs"));
  EXPECT_EQ(c.data.masks_dir, std::filesystem::path("/abs/masks"));
  EXPECT_EQ(c.network.encoder_name, "efficientnet-b0");
  EXPECT_EQ(c.data.folds, 5);
}

TEST(RunConfig, UnknownKeysAreNamed) {
  auto j = minimal();
  j["network"]["bogus"] = 1;
  EXPECT_NE(error_of(j).find("network.bogus"), std::string::npos);
  j = minimal();
  j["extra"] = true;
  EXPECT_NE(error_of(j).find("extra"), std::string::npos);
  j = minimal();
  j["network"]["attention"] = {{"ratio", 4}};
  EXPECT_NE(error_of(j).find("network.attention.ratio"), std::string::npos);
}

TEST(RunConfig, IllTypedValuesAreNamed) {
  auto j = minimal();
  j["train"]["max_epochs"] = "ten";
  EXPECT_NE(error_of(j).find("train.max_epochs"), std::string::npos);
  j = minimal();
  j["loss"] = {{"gamma", true}};
  EXPECT_NE(error_of(j).find("loss.gamma"), std::string::npos);
  j = minimal();
  j["network"]["decoder_channels"] = {256, 128};
  EXPECT_NE(error_of(j).find("network"), std::string::npos);
  j = minimal();
  j["schema_version"] = 2;
  EXPECT_NE(error_of(j).find("schema_version"), std::string::npos);
  j = minimal();
  j["train"]["seed"] = 4;
  EXPECT_NE(error_of(j).find("train.seed"), std::string::npos);
  j = minimal();
  j["augmentation"] = "sometimes";
  EXPECT_NE(error_of(j).find("augmentation"), std::string::npos);
}

TEST(RunConfig, RoundTripThroughJson) {
  auto j = minimal();
  j["augmentation"] = "none";
  j["loss"] = {{"gamma", 1.5}, {"balanced_alpha", true}};
  j["categories"] = {{"thresholds", {0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 6.4, 12.8}}};
  const auto c = run_config_from_json(j, "/base");
  const auto dumped = to_json(c);
  const auto back = run_config_from_json(dumped, "/elsewhere");
  EXPECT_EQ(to_json(back), dumped);
  EXPECT_EQ(back.augmentation.overall_p, 0.0);
  EXPECT_EQ(back.loss.gamma, 1.5);
  EXPECT_EQ(back.categories.thresholds.back(), 12.8);
  EXPECT_EQ(back.train, c.train);
}

TEST(RunConfig, AugmentationObjectForm) {
  auto j = minimal();
  j["augmentation"] = Json::parse(R"({
    "overall_p": 1.0,
    "sets": [{"p": 0.5, "transforms": [{"name": "rotate", "p": 1.0, "params": {"limit": 10}}]}]
  })");
  const auto c = run_config_from_json(j, "/base");
  ASSERT_EQ(c.augmentation.sets.size(), 1u);
  EXPECT_EQ(c.augmentation.sets[0].transforms[0].kind, TransformKind::Rotate);
  EXPECT_EQ(c.augmentation.sets[0].transforms[0].param("limit"), 10.0);
  j["augmentation"]["sets"][0]["transforms"][0]["name"] = "twirl";
  EXPECT_NE(error_of(j).find("augmentation"), std::string::npos);
}

TEST(RunConfig, LoadFromFile) {
  const auto dir = scratch_dir("config");
  std::ofstream(dir / "run.json") << minimal().dump(2);
  const auto c = load_run_config(dir / "run.json");
  EXPECT_EQ(c.data.images_dir, dir / "imgs");
  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_THROW(load_run_config(dir / "broken.json"), ConfigError);
  EXPECT_THROW(load_run_config(dir / "absent.json"), ConfigError);
}

TEST(SettingsJson, EachStructRoundTrips) {
  NetworkConfig n;
  n.encoder_name = "efficientnet-b3";
  n.pre_block = true;
  n.attention.aggregation = Aggregation::Concat;
  EXPECT_EQ(network_from_json(to_json(n), "network"), n);
  TrainSettings t;
  t.plateau_patience = 4;
  EXPECT_EQ(train_from_json(to_json(t), "train"), t);
  CategorySpec s;
  EXPECT_EQ(categories_from_json(to_json(s), "categories").thresholds, s.thresholds);
  const auto plan = augmentation_from_json(to_json(AugmentationPlan::standard()), "augmentation");
  EXPECT_EQ(to_json(plan), to_json(AugmentationPlan::standard()));
}
