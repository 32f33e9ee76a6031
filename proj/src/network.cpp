#include "fusegnet/network.hpp"

#include "fusegnet/error.hpp"

#include <cstdlib>
#include <filesystem>

namespace fusegnet {

namespace {

torch::nn::Sequential conv_bn_relu(int64_t in_channels, int64_t out_channels) {
  return torch::nn::Sequential(
      torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, 3).padding(1).bias(false)),
      torch::nn::BatchNorm2d(out_channels), torch::nn::ReLU());
}

}  // namespace

std::string to_string(UpsampleMode mode) {
  return mode == UpsampleMode::Bilinear ? "bilinear" : "nearest";
}

UpsampleMode upsample_from_string(const std::string& name) {
  if (name == "bilinear") return UpsampleMode::Bilinear;
  if (name == "nearest") return UpsampleMode::Nearest;
  throw ConfigError("unknown upsampling mode '" + name + "'");
}

bool NetworkConfig::operator==(const NetworkConfig& o) const {
  const auto& a = attention;
  const auto& b = o.attention;
  return encoder_name == o.encoder_name && decoder_channels == o.decoder_channels &&
         input_size == o.input_size && upsample == o.upsample &&
         a.reduction_ratio == b.reduction_ratio && a.excitation_bias == b.excitation_bias &&
         a.projection_bias == b.projection_bias && a.shared_branches == b.shared_branches &&
         a.aggregation == b.aggregation &&
         shorted_threshold == o.shorted_threshold && pre_block == o.pre_block;
}

void validate(const NetworkConfig& config) {
  efficientnet_scaling(config.encoder_name);
  if (config.decoder_channels.size() != 5) {
    throw ConfigError("network.decoder_channels must list 5 widths");
  }
  for (std::size_t i = 0; i < config.decoder_channels.size(); ++i) {
    if (config.decoder_channels[i] < 1) {
      throw ConfigError("network.decoder_channels must be positive");
    }
    if (i > 0 && config.decoder_channels[i] >= config.decoder_channels[i - 1]) {
      throw ConfigError("network.decoder_channels must strictly decrease toward the output");
    }
  }
  if (config.input_size < 32 || config.input_size % 32 != 0) {
    throw ConfigError("network.input_size must be a positive multiple of 32");
  }
  if (config.attention.reduction_ratio < 1) {
    throw ConfigError("network.reduction_ratio must be >= 1");
  }
  if (config.shorted_threshold < 0) throw ConfigError("network.shorted_threshold must be >= 0");
  if (config.drop_connect_rate < 0.0 || config.drop_connect_rate >= 1.0) {
    throw ConfigError("network.drop_connect_rate must lie in [0, 1)");
  }
  if (!(config.encoder_bn_momentum > 0.0 && config.encoder_bn_momentum <= 1.0)) {
    throw ConfigError("network.encoder_bn_momentum must lie in (0, 1]");
  }
}

std::vector<DecoderStageConfig> decoder_stage_configs(const NetworkConfig& config,
                                                      const std::vector<int64_t>& encoder_channels) {
  if (encoder_channels.size() != 5) throw ConfigError("encoder must expose 5 stages");
  std::vector<DecoderStageConfig> stages;
  int64_t in_channels = encoder_channels.back();
  for (std::size_t i = 0; i < 5; ++i) {
    DecoderStageConfig stage;
    stage.out_channels = config.decoder_channels[i];
    stage.use_skip = i < 4;
    // stage i consumes the encoder map one level shallower than its input
    const int64_t skip = stage.use_skip ? encoder_channels[3 - i] : 0;
    stage.shorted = !stage.use_skip || in_channels + skip < config.shorted_threshold;
    stage.pre_block = config.pre_block;
    stages.push_back(stage);
    in_channels = stage.out_channels;
  }
  return stages;
}

DecoderBlockImpl::DecoderBlockImpl(int64_t in_channels, int64_t skip_channels,
                                   const DecoderStageConfig& stage, const ScseSettings& attention_settings,
                                   UpsampleMode upsample)
    : in_channels_(in_channels),
      skip_channels_(stage.use_skip ? skip_channels : 0),
      stage_(stage),
      upsample_(upsample) {
  const int64_t fused = in_channels_ + skip_channels_;
  if (stage.pre_block) pre = register_module("pre", conv_bn_relu(fused, fused));
  ScseSettings settings = attention_settings;
  settings.shorted = stage.shorted;
  attention = register_module("attention", ParallelScse(fused, settings));
  conv = register_module(
      "conv", torch::nn::Conv2d(
                  torch::nn::Conv2dOptions(fused, stage.out_channels, 3).padding(1).bias(false)));
  bn = register_module("bn", torch::nn::BatchNorm2d(stage.out_channels));
}

torch::Tensor DecoderBlockImpl::forward(const torch::Tensor& prev, const torch::Tensor& skip) {
  if (prev.dim() != 4 || prev.size(1) != in_channels_) {
    throw ShapeError("decoder stage expects " + std::to_string(in_channels_) + " input channels");
  }
  namespace F = torch::nn::functional;
  auto options = F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0});
  if (upsample_ == UpsampleMode::Bilinear) {
    options.mode(torch::kBilinear).align_corners(false);
  } else {
    options.mode(torch::kNearest);
  }
  auto x = F::interpolate(prev, options);

  if (stage_.use_skip) {
    if (!skip.defined()) throw ShapeError("decoder stage requires a skip connection");
    if (skip.dim() != 4 || skip.size(2) != x.size(2) || skip.size(3) != x.size(3) ||
        skip.size(0) != x.size(0)) {
      throw ShapeError("skip map does not match the upsampled decoder map spatially");
    }
    if (skip.size(1) != skip_channels_) {
      throw ShapeError("skip map has " + std::to_string(skip.size(1)) + " channels, expected " +
                       std::to_string(skip_channels_));
    }
    x = torch::cat({x, skip}, 1);
  }

  if (pre) x = pre->forward(x);
  x = attention(x);
  return torch::relu(bn(conv(x)));
}

FUSegNetImpl::FUSegNetImpl(const NetworkConfig& config) : config_(config) {
  validate(config);
  encoder_ = register_module("encoder", make_encoder(config.encoder_name, config.drop_connect_rate,
                                                            config.encoder_bn_momentum));
  if (config.pretrained) {
    auto path = resolve_pretrained_path(config);
    if (!path) {
      throw ConfigError("network.pretrained is set but no weight file is configured "
                        "(network.pretrained_weights or $FUSEGNET_CACHE_DIR)");
    }
    load_encoder_weights(*encoder_, *path);
  }

  const auto channels = encoder_->stage_channels();
  const auto stages = decoder_stage_configs(config, channels);
  decoder_ = register_module("decoder", torch::nn::ModuleList());
  int64_t in_channels = channels.back();
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const int64_t skip = stages[i].use_skip ? channels[3 - i] : 0;
    DecoderBlock block(in_channels, skip, stages[i], config.attention, config.upsample);
    decoder_->push_back(block);
    blocks_.push_back(block);
    in_channels = stages[i].out_channels;
  }
  head = register_module(
      "head", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, 1, 3).padding(1)));
}

std::vector<torch::Tensor> FUSegNetImpl::encode(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 3) {
    throw ShapeError("network input must be [N, 3, H, W]");
  }
  if (image.size(2) % 32 != 0 || image.size(3) % 32 != 0 || image.size(2) == 0 ||
      image.size(3) == 0) {
    throw ShapeError("input height and width must be divisible by 32, got " +
                     std::to_string(image.size(2)) + "x" + std::to_string(image.size(3)));
  }
  return encoder_->forward_stages(image);
}

torch::Tensor FUSegNetImpl::decode(const std::vector<torch::Tensor>& stages) {
  if (stages.size() != 5) throw ShapeError("decoder expects 5 encoder stages");
  auto x = stages.back();
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    x = blocks_[i]->stage().use_skip ? blocks_[i]->forward(x, stages[3 - i])
                                     : blocks_[i]->forward(x);
  }
  return torch::sigmoid(head(x));
}

torch::Tensor FUSegNetImpl::forward(const torch::Tensor& image) { return decode(encode(image)); }

std::optional<std::string> resolve_pretrained_path(const NetworkConfig& config) {
  if (!config.pretrained_weights.empty()) return config.pretrained_weights;
  if (const char* cache = std::getenv("FUSEGNET_CACHE_DIR"); cache != nullptr && *cache != '\0') {
    return (std::filesystem::path(cache) / (config.encoder_name + ".pth")).string();
  }
  return std::nullopt;
}

int64_t count_trainable_parameters(const torch::nn::Module& module) {
  int64_t total = 0;
  for (const auto& p : module.parameters()) {
    if (p.requires_grad()) total += p.numel();
  }
  return total;
}

}  // namespace fusegnet
