#pragma once

// Pretrained-backbone encoder adapters. An encoder turns a standardized
// [N, 3, H, W] image into five feature maps at strides 2, 4, 8, 16 and 32.

#include <torch/torch.h>

#include <array>
#include <memory>
#include <string>
#include <vector>

namespace fusegnet {

class EncoderBase : public torch::nn::Module {
 public:
  ~EncoderBase() override = default;

  // Five maps, shallowest first; stage i is downsampled by 2^(i+1).
  virtual std::vector<torch::Tensor> forward_stages(const torch::Tensor& image) = 0;
  // Channel count of each of the five stages.
  virtual std::vector<int64_t> stage_channels() const = 0;
  virtual std::string name() const = 0;
};

// Width/depth multipliers of the efficient-scaling CNN family.
struct EfficientNetScaling {
  double width = 1.0;
  double depth = 1.0;
  int64_t resolution = 224;
  double dropout = 0.2;
};

EfficientNetScaling efficientnet_scaling(const std::string& name);
int64_t round_filters(int64_t filters, double width_multiplier, int64_t divisor = 8);
int64_t round_repeats(int64_t repeats, double depth_multiplier);

// Convolution with TensorFlow "same" padding: pads (possibly asymmetrically)
// so that the output size is ceil(input / stride). Pretrained checkpoints of
// the backbone were trained with this padding.
class SameConv2dImpl : public torch::nn::Module {
 public:
  SameConv2dImpl(int64_t in_channels, int64_t out_channels, int64_t kernel, int64_t stride = 1,
                 int64_t groups = 1, bool bias = false);
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor weight;
  torch::Tensor bias;

 private:
  int64_t kernel_;
  int64_t stride_;
  int64_t groups_;
};
TORCH_MODULE(SameConv2d);

struct MBConvSpec {
  int64_t kernel = 3;
  int64_t stride = 1;
  int64_t expand_ratio = 1;
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  double se_ratio = 0.25;
};

// Mobile inverted bottleneck with squeeze-excitation and swish activations.
class MBConvBlockImpl : public torch::nn::Module {
 public:
  MBConvBlockImpl(const MBConvSpec& spec, double bn_momentum, double bn_eps);
  torch::Tensor forward(const torch::Tensor& x, double drop_connect_rate);

  const MBConvSpec& spec() const { return spec_; }

 private:
  MBConvSpec spec_;
  SameConv2d expand_conv_{nullptr};
  torch::nn::BatchNorm2d bn0_{nullptr};
  SameConv2d depthwise_conv_{nullptr};
  torch::nn::BatchNorm2d bn1_{nullptr};
  SameConv2d se_reduce_{nullptr};
  SameConv2d se_expand_{nullptr};
  SameConv2d project_conv_{nullptr};
  torch::nn::BatchNorm2d bn2_{nullptr};
};
TORCH_MODULE(MBConvBlock);

// Running-statistics momentum of the published EfficientNet batch norms.
constexpr double kEncoderBnMomentum = 0.01;

// Feature extractor of the efficient-scaling CNN (variants b0..b7). The
// classification head is not built. Parameter names follow the published
// PyTorch checkpoints ("_conv_stem.weight", "_blocks.3._bn1.running_var", ...)
// so a converted state dict loads by name.
class EfficientNetEncoderImpl : public EncoderBase {
 public:
  explicit EfficientNetEncoderImpl(const std::string& name, double drop_connect_rate = 0.2,
                                   double bn_momentum = kEncoderBnMomentum);

  std::vector<torch::Tensor> forward_stages(const torch::Tensor& image) override;
  std::vector<int64_t> stage_channels() const override { return stage_channels_; }
  std::string name() const override { return name_; }

  std::size_t block_count() const { return blocks_.size(); }
  // Index one past the last block of each of the stride-4..32 stages.
  const std::vector<std::size_t>& stage_ends() const { return stage_ends_; }

 private:
  std::string name_;
  double drop_connect_rate_;
  SameConv2d conv_stem_{nullptr};
  torch::nn::BatchNorm2d bn0_{nullptr};
  torch::nn::ModuleList block_list_{nullptr};
  std::vector<MBConvBlock> blocks_;
  std::vector<std::size_t> stage_ends_;
  std::vector<int64_t> stage_channels_;
};

// Builds the named encoder. Throws ConfigError for unknown names.
std::shared_ptr<EncoderBase> make_encoder(const std::string& name, double drop_connect_rate,
                                          double bn_momentum = kEncoderBnMomentum);

// Copies tensors from a state dict written with torch.save (zip format) into
// the encoder, matching by parameter/buffer name. Keys of the classification
// head are ignored; any missing or mis-shaped key throws DataError.
void load_encoder_weights(EncoderBase& encoder, const std::string& path);

// Published training-corpus statistics the pretrained backbones expect,
// for pixels scaled to [0, 1], in RGB order.
struct NormalizationStats {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> stddev{0.229, 0.224, 0.225};
};

NormalizationStats encoder_normalization(const std::string& encoder_name);

}  // namespace fusegnet
