#include "fusegnet/encoder.hpp"

#include "fusegnet/error.hpp"

#include <torch/serialize.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <map>

namespace fusegnet {

namespace {

// Baseline (b0) block groups: kernel, stride, expansion, in, out, repeats.
struct BlockGroup {
  int64_t kernel, stride, expand, in, out, repeats;
};

constexpr BlockGroup kBaseGroups[] = {
    {3, 1, 1, 32, 16, 1},  {3, 2, 6, 16, 24, 2},  {5, 2, 6, 24, 40, 2},   {3, 2, 6, 40, 80, 3},
    {5, 1, 6, 80, 112, 3}, {5, 2, 6, 112, 192, 4}, {3, 1, 6, 192, 320, 1},
};

constexpr double kBnEps = 1e-3;

torch::nn::BatchNorm2d make_bn(int64_t channels, double momentum, double eps) {
  return torch::nn::BatchNorm2d(
      torch::nn::BatchNorm2dOptions(channels).momentum(momentum).eps(eps));
}

torch::Tensor swish(const torch::Tensor& x) { return x * torch::sigmoid(x); }

int64_t same_padding(int64_t size, int64_t kernel, int64_t stride) {
  const int64_t out = (size + stride - 1) / stride;
  return std::max<int64_t>((out - 1) * stride + kernel - size, 0);
}

torch::Tensor drop_connect(const torch::Tensor& x, double rate) {
  const double keep = 1.0 - rate;
  auto mask = torch::floor(keep + torch::rand({x.size(0), 1, 1, 1}, x.options()));
  return x / keep * mask;
}

}  // namespace

EfficientNetScaling efficientnet_scaling(const std::string& name) {
  static const std::map<std::string, EfficientNetScaling> table = {
      {"efficientnet-b0", {1.0, 1.0, 224, 0.2}}, {"efficientnet-b1", {1.0, 1.1, 240, 0.2}},
      {"efficientnet-b2", {1.1, 1.2, 260, 0.3}}, {"efficientnet-b3", {1.2, 1.4, 300, 0.3}},
      {"efficientnet-b4", {1.4, 1.8, 380, 0.4}}, {"efficientnet-b5", {1.6, 2.2, 456, 0.4}},
      {"efficientnet-b6", {1.8, 2.6, 528, 0.5}}, {"efficientnet-b7", {2.0, 3.1, 600, 0.5}},
  };
  auto it = table.find(name);
  if (it == table.end()) throw ConfigError("unknown encoder '" + name + "'");
  return it->second;
}

int64_t round_filters(int64_t filters, double width_multiplier, int64_t divisor) {
  const double scaled = static_cast<double>(filters) * width_multiplier;
  int64_t rounded =
      std::max<int64_t>(divisor, static_cast<int64_t>(scaled + divisor / 2.0) / divisor * divisor);
  if (static_cast<double>(rounded) < 0.9 * scaled) rounded += divisor;
  return rounded;
}

int64_t round_repeats(int64_t repeats, double depth_multiplier) {
  return static_cast<int64_t>(std::ceil(depth_multiplier * static_cast<double>(repeats)));
}

SameConv2dImpl::SameConv2dImpl(int64_t in_channels, int64_t out_channels, int64_t kernel,
                               int64_t stride, int64_t groups, bool with_bias)
    : kernel_(kernel), stride_(stride), groups_(groups) {
  // Same initialization as torch::nn::Conv2d.
  weight = register_parameter("weight",
                              torch::empty({out_channels, in_channels / groups, kernel, kernel}));
  torch::nn::init::kaiming_uniform_(weight, std::sqrt(5.0));
  if (with_bias) {
    const double fan_in = static_cast<double>(in_channels / groups * kernel * kernel);
    const double bound = 1.0 / std::sqrt(fan_in);
    bias = register_parameter("bias", torch::empty({out_channels}).uniform_(-bound, bound));
  }
}

torch::Tensor SameConv2dImpl::forward(const torch::Tensor& x) {
  const int64_t pad_h = same_padding(x.size(2), kernel_, stride_);
  const int64_t pad_w = same_padding(x.size(3), kernel_, stride_);
  auto padded = x;
  if (pad_h > 0 || pad_w > 0) {
    padded = torch::constant_pad_nd(x, {pad_w / 2, pad_w - pad_w / 2, pad_h / 2, pad_h - pad_h / 2});
  }
  return torch::conv2d(padded, weight, bias, torch::IntArrayRef{stride_, stride_},
                       torch::IntArrayRef{0, 0}, torch::IntArrayRef{1, 1}, groups_);
}

MBConvBlockImpl::MBConvBlockImpl(const MBConvSpec& spec, double bn_momentum, double bn_eps)
    : spec_(spec) {
  const int64_t expanded = spec.in_channels * spec.expand_ratio;
  if (spec.expand_ratio != 1) {
    expand_conv_ = register_module("_expand_conv", SameConv2d(spec.in_channels, expanded, 1));
    bn0_ = register_module("_bn0", make_bn(expanded, bn_momentum, bn_eps));
  }
  depthwise_conv_ = register_module(
      "_depthwise_conv", SameConv2d(expanded, expanded, spec.kernel, spec.stride, expanded));
  bn1_ = register_module("_bn1", make_bn(expanded, bn_momentum, bn_eps));
  const int64_t squeezed =
      std::max<int64_t>(1, static_cast<int64_t>(static_cast<double>(spec.in_channels) * spec.se_ratio));
  se_reduce_ = register_module("_se_reduce", SameConv2d(expanded, squeezed, 1, 1, 1, true));
  se_expand_ = register_module("_se_expand", SameConv2d(squeezed, expanded, 1, 1, 1, true));
  project_conv_ = register_module("_project_conv", SameConv2d(expanded, spec.out_channels, 1));
  bn2_ = register_module("_bn2", make_bn(spec.out_channels, bn_momentum, bn_eps));
}

torch::Tensor MBConvBlockImpl::forward(const torch::Tensor& input, double drop_connect_rate) {
  auto x = input;
  if (spec_.expand_ratio != 1) x = swish(bn0_(expand_conv_(x)));
  x = swish(bn1_(depthwise_conv_(x)));

  auto squeezed = torch::adaptive_avg_pool2d(x, {1, 1});
  squeezed = se_expand_(swish(se_reduce_(squeezed)));
  x = torch::sigmoid(squeezed) * x;

  x = bn2_(project_conv_(x));
  if (spec_.stride == 1 && spec_.in_channels == spec_.out_channels) {
    if (is_training() && drop_connect_rate > 0.0) x = drop_connect(x, drop_connect_rate);
    x = x + input;
  }
  return x;
}

EfficientNetEncoderImpl::EfficientNetEncoderImpl(const std::string& name, double drop_connect_rate,
                                                 double bn_momentum)
    : name_(name), drop_connect_rate_(drop_connect_rate) {
  const auto scaling = efficientnet_scaling(name);
  const int64_t stem = round_filters(32, scaling.width);
  conv_stem_ = register_module("_conv_stem", SameConv2d(3, stem, 3, 2));
  bn0_ = register_module("_bn0", make_bn(stem, bn_momentum, kBnEps));
  block_list_ = register_module("_blocks", torch::nn::ModuleList());

  std::vector<std::size_t> downsampling_blocks;
  for (const auto& group : kBaseGroups) {
    MBConvSpec spec;
    spec.kernel = group.kernel;
    spec.expand_ratio = group.expand;
    spec.in_channels = round_filters(group.in, scaling.width);
    spec.out_channels = round_filters(group.out, scaling.width);
    const int64_t repeats = round_repeats(group.repeats, scaling.depth);
    for (int64_t r = 0; r < repeats; ++r) {
      spec.stride = r == 0 ? group.stride : 1;
      if (r > 0) spec.in_channels = spec.out_channels;
      if (spec.stride == 2) downsampling_blocks.push_back(blocks_.size());
      MBConvBlock block(spec, bn_momentum, kBnEps);
      block_list_->push_back(block);
      blocks_.push_back(block);
    }
  }

  // The stem covers stride 2; the first stride-2 block opens the stride-4
  // stage, every later one closes the stage before it.
  for (std::size_t i = 1; i < downsampling_blocks.size(); ++i) {
    stage_ends_.push_back(downsampling_blocks[i]);
  }
  stage_ends_.push_back(blocks_.size());

  stage_channels_.push_back(stem);
  for (auto end : stage_ends_) stage_channels_.push_back(blocks_[end - 1]->spec().out_channels);
}

std::vector<torch::Tensor> EfficientNetEncoderImpl::forward_stages(const torch::Tensor& image) {
  std::vector<torch::Tensor> stages;
  stages.reserve(5);
  auto x = swish(bn0_(conv_stem_(image)));
  stages.push_back(x);

  const double n = static_cast<double>(blocks_.size());
  std::size_t index = 0;
  for (auto end : stage_ends_) {
    for (; index < end; ++index) {
      x = blocks_[index]->forward(x, drop_connect_rate_ * static_cast<double>(index) / n);
    }
    stages.push_back(x);
  }
  return stages;
}

std::shared_ptr<EncoderBase> make_encoder(const std::string& name, double drop_connect_rate,
                                          double bn_momentum) {
  if (name.rfind("efficientnet-", 0) == 0) {
    return std::make_shared<EfficientNetEncoderImpl>(name, drop_connect_rate, bn_momentum);
  }
  throw ConfigError("unknown encoder '" + name + "'");
}

void load_encoder_weights(EncoderBase& encoder, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open pretrained weights '" + path + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  torch::IValue value;
  try {
    value = torch::pickle_load(bytes);
  } catch (const c10::Error& e) {
    throw DataError("'" + path + "' is not a zip-format torch state dict: " + e.what_without_backtrace());
  }
  if (!value.isGenericDict()) throw DataError("'" + path + "' does not hold a state dict");

  std::map<std::string, torch::Tensor> source;
  for (const auto& entry : value.toGenericDict()) {
    if (entry.key().isString() && entry.value().isTensor()) {
      source.emplace(entry.key().toStringRef(), entry.value().toTensor());
    }
  }

  torch::NoGradGuard no_grad;
  auto copy_named = [&](const std::string& key, torch::Tensor& target) {
    auto it = source.find(key);
    if (it == source.end()) {
      // Older checkpoints predate the batch-norm step counter.
      if (key.ends_with("num_batches_tracked")) return;
      throw DataError("pretrained weights lack '" + key + "'");
    }
    if (it->second.sizes() != target.sizes()) {
      throw DataError("pretrained tensor '" + key + "' has a mismatched shape");
    }
    target.copy_(it->second.to(target.dtype()));
  };
  for (auto& item : encoder.named_parameters()) copy_named(item.key(), item.value());
  for (auto& item : encoder.named_buffers()) copy_named(item.key(), item.value());
}

NormalizationStats encoder_normalization(const std::string& encoder_name) {
  efficientnet_scaling(encoder_name);  // validates the name
  return NormalizationStats{};
}

}  // namespace fusegnet
