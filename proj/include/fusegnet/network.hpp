#pragma once

// FUSegNet: pretrained encoder, five upsampling decoder stages with P-scSE
// fusion in the middle of each stage, and a sigmoid segmentation head.
//
//   stage(prev, skip) = relu(bn(conv3x3(pscse(concat(up2(prev), skip)))))
//
// The last (full resolution) stage has no skip and uses the shorted P-scSE.

#include "fusegnet/attention.hpp"
#include "fusegnet/encoder.hpp"

#include <torch/torch.h>

#include <optional>
#include <string>
#include <vector>

namespace fusegnet {

enum class UpsampleMode { Bilinear, Nearest };

std::string to_string(UpsampleMode mode);
UpsampleMode upsample_from_string(const std::string& name);

struct NetworkConfig {
  std::string encoder_name = "efficientnet-b7";
  std::vector<int64_t> decoder_channels{256, 128, 64, 32, 16};
  int64_t input_size = 512;
  bool pretrained = false;
  // Local state dict for the encoder. Empty: <cache dir>/<encoder_name>.pth,
  // where the cache dir comes from $FUSEGNET_CACHE_DIR.
  std::string pretrained_weights;
  UpsampleMode upsample = UpsampleMode::Bilinear;
  ScseSettings attention;
  // Stages whose concatenated input has fewer channels than this use the
  // shorted P-scSE (the final stage always does).
  int64_t shorted_threshold = 32;
  bool pre_block = false;
  double drop_connect_rate = 0.2;
  // Short runs of a few hundred steps need a faster rate for the running
  // statistics to catch up with the weights.
  double encoder_bn_momentum = kEncoderBnMomentum;

  bool operator==(const NetworkConfig&) const;
};

// Throws ConfigError describing the first violated constraint.
void validate(const NetworkConfig& config);

struct DecoderStageConfig {
  int64_t out_channels = 0;
  bool use_skip = true;
  bool shorted = false;
  bool pre_block = false;
};

// One entry per decoder stage, deepest first, for the given encoder channels
// (shallowest first, five entries).
std::vector<DecoderStageConfig> decoder_stage_configs(const NetworkConfig& config,
                                                      const std::vector<int64_t>& encoder_channels);

class DecoderBlockImpl : public torch::nn::Module {
 public:
  DecoderBlockImpl(int64_t in_channels, int64_t skip_channels, const DecoderStageConfig& stage,
                   const ScseSettings& attention, UpsampleMode upsample);

  // prev: [N, in, h, w]; skip: [N, skip, 2h, 2w] or undefined when the stage
  // has no skip. Returns [N, out, 2h, 2w].
  torch::Tensor forward(const torch::Tensor& prev, const torch::Tensor& skip = {});

  const DecoderStageConfig& stage() const { return stage_; }

  torch::nn::Sequential pre{nullptr};
  ParallelScse attention{nullptr};
  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d bn{nullptr};

 private:
  int64_t in_channels_;
  int64_t skip_channels_;
  DecoderStageConfig stage_;
  UpsampleMode upsample_;
};
TORCH_MODULE(DecoderBlock);

class FUSegNetImpl : public torch::nn::Module {
 public:
  explicit FUSegNetImpl(const NetworkConfig& config);

  // [N, 3, H, W] standardized image -> five encoder stages.
  std::vector<torch::Tensor> encode(const torch::Tensor& image);
  // Encoder stages -> [N, 1, H, W] probabilities.
  torch::Tensor decode(const std::vector<torch::Tensor>& stages);
  torch::Tensor forward(const torch::Tensor& image);

  const NetworkConfig& config() const { return config_; }
  EncoderBase& encoder() { return *encoder_; }
  const std::vector<DecoderBlock>& decoder_blocks() const { return blocks_; }

  torch::nn::Conv2d head{nullptr};

 private:
  NetworkConfig config_;
  std::shared_ptr<EncoderBase> encoder_;
  torch::nn::ModuleList decoder_{nullptr};
  std::vector<DecoderBlock> blocks_;
};
TORCH_MODULE(FUSegNet);

// Resolves the pretrained weight path for a config, or nullopt when none is
// configured and the cache directory variable is unset.
std::optional<std::string> resolve_pretrained_path(const NetworkConfig& config);

int64_t count_trainable_parameters(const torch::nn::Module& module);

}  // namespace fusegnet
