#include "fusegnet/error.hpp"
#include "fusegnet/network.hpp"

#include <gtest/gtest.h>

#include <cstdlib>

using namespace fusegnet;

namespace {

NetworkConfig small_config() {
  NetworkConfig c;
  c.encoder_name = "efficientnet-b0";
  c.input_size = 64;
  return c;
}

}  // namespace

TEST(Encoder, B0StagesHaveStrides2To32) {
  torch::manual_seed(0);
  auto encoder = make_encoder("efficientnet-b0", 0.2);
  encoder->eval();
  torch::NoGradGuard guard;
  auto stages = encoder->forward_stages(torch::randn({1, 3, 64, 64}));
  ASSERT_EQ(stages.size(), 5u);
  const auto channels = encoder->stage_channels();
  EXPECT_EQ(channels, (std::vector<int64_t>{32, 24, 40, 112, 320}));
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(stages[i].size(1), channels[i]);
    EXPECT_EQ(stages[i].size(2), 64 >> (i + 1));
    EXPECT_EQ(stages[i].size(3), 64 >> (i + 1));
  }
}

TEST(Encoder, UnknownNameRejected) {
  EXPECT_THROW(make_encoder("efficientnet-b9", 0.2), ConfigError);
  EXPECT_THROW(make_encoder("resnet34", 0.2), ConfigError);
}

TEST(Encoder, MissingWeightFileIsADataError) {
  auto encoder = make_encoder("efficientnet-b0", 0.2);
  EXPECT_THROW(load_encoder_weights(*encoder, "/nonexistent/weights.pth"), DataError);
}

TEST(Network, OutputMatchesInputSizeAndIsProbability) {
  torch::manual_seed(1);
  FUSegNet net(small_config());
  net->eval();
  torch::NoGradGuard guard;
  for (int64_t size : {64, 96, 224}) {
    auto y = net(torch::randn({2, 3, size, size}));
    EXPECT_EQ(y.sizes(), (std::vector<int64_t>{2, 1, size, size}));
    EXPECT_GE(y.min().item<double>(), 0.0);
    EXPECT_LE(y.max().item<double>(), 1.0);
  }
}

TEST(Network, NonSquareInputs) {
  FUSegNet net(small_config());
  net->eval();
  torch::NoGradGuard guard;
  auto y = net(torch::randn({1, 3, 64, 128}));
  EXPECT_EQ(y.sizes(), (std::vector<int64_t>{1, 1, 64, 128}));
}

TEST(Network, RejectsSizesNotDivisibleBy32) {
  FUSegNet net(small_config());
  EXPECT_THROW(net(torch::randn({1, 3, 60, 64})), ShapeError);
  EXPECT_THROW(net(torch::randn({1, 3, 64, 48})), ShapeError);
  EXPECT_THROW(net(torch::randn({1, 1, 64, 64})), ShapeError);
}

TEST(Network, EvalModeIsDeterministic) {
  FUSegNet net(small_config());
  net->eval();
  torch::NoGradGuard guard;
  auto x = torch::randn({1, 3, 64, 64});
  EXPECT_TRUE(torch::equal(net(x), net(x)));
}

TEST(Network, DecoderStagesFollowEncoderChannels) {
  NetworkConfig c;  // b7 widths: 64, 48, 80, 224, 640
  const auto stages = decoder_stage_configs(c, {64, 48, 80, 224, 640});
  ASSERT_EQ(stages.size(), 5u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_TRUE(stages[i].use_skip);
    EXPECT_FALSE(stages[i].shorted);
    EXPECT_EQ(stages[i].out_channels, c.decoder_channels[i]);
  }
  EXPECT_FALSE(stages[4].use_skip);
  EXPECT_TRUE(stages[4].shorted);

  c.shorted_threshold = 1000;  // every stage below threshold
  for (const auto& s : decoder_stage_configs(c, {64, 48, 80, 224, 640})) EXPECT_TRUE(s.shorted);
}

TEST(Network, LastStageUsesShortedAttention) {
  FUSegNet net(small_config());
  const auto& blocks = net->decoder_blocks();
  ASSERT_EQ(blocks.size(), 5u);
  EXPECT_TRUE(blocks.back()->attention->is_shorted());
  EXPECT_FALSE(blocks.front()->attention->is_shorted());
}

TEST(Network, PreBlockVariantRuns) {
  auto c = small_config();
  c.pre_block = true;
  FUSegNet net(c);
  net->eval();
  torch::NoGradGuard guard;
  EXPECT_EQ(net(torch::randn({1, 3, 64, 64})).size(1), 1);
  EXPECT_GT(count_trainable_parameters(*net), count_trainable_parameters(*FUSegNet(small_config())));
}

TEST(Network, ConfigValidation) {
  auto c = small_config();
  c.decoder_channels = {256, 128, 64, 32};
  EXPECT_THROW(validate(c), ConfigError);
  c = small_config();
  c.decoder_channels = {16, 32, 64, 128, 256};
  EXPECT_THROW(validate(c), ConfigError);
  c = small_config();
  c.input_size = 100;
  EXPECT_THROW(validate(c), ConfigError);
  c = small_config();
  c.drop_connect_rate = 1.0;
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(Network, PretrainedWithoutWeightsIsAConfigError) {
  ::unsetenv("FUSEGNET_CACHE_DIR");
  auto c = small_config();
  c.pretrained = true;
  EXPECT_FALSE(resolve_pretrained_path(c).has_value());
  EXPECT_THROW(FUSegNet{c}, ConfigError);
  ::setenv("FUSEGNET_CACHE_DIR", "/tmp/cache", 1);
  EXPECT_EQ(resolve_pretrained_path(c).value(), "/tmp/cache/efficientnet-b0.pth");
  ::unsetenv("FUSEGNET_CACHE_DIR");
}

TEST(Network, B7ParameterBudget) {
  FUSegNet net(NetworkConfig{});
  const double params = static_cast<double>(count_trainable_parameters(*net));
  EXPECT_NEAR(params / 64.90e6, 1.0, 0.03);
}

TEST(Network, EncoderBatchNormMomentumFollowsConfig) {
  auto c = small_config();
  EXPECT_EQ(c.encoder_bn_momentum, 0.01);
  c.encoder_bn_momentum = 0.1;
  FUSegNet net(c);
  int seen = 0;
  for (const auto& m : net->encoder().modules(false)) {
    if (auto* bn = m->as<torch::nn::BatchNorm2d>()) {
      EXPECT_EQ(bn->options.momentum().value(), 0.1);
      ++seen;
    }
  }
  EXPECT_GT(seen, 10);
  c.encoder_bn_momentum = 0.0;
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(Network, ConfigEqualityCoversArchitecture) {
  auto a = small_config();
  auto b = a;
  EXPECT_TRUE(a == b);
  b.attention.aggregation = Aggregation::Concat;
  EXPECT_FALSE(a == b);
  b = a;
  b.pre_block = true;
  EXPECT_FALSE(a == b);
  b = a;
  b.encoder_bn_momentum = 0.5;  // training-time only
  EXPECT_TRUE(a == b);
}
