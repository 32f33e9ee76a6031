#include "fusegnet/attention.hpp"

#include "fusegnet/error.hpp"

#include <algorithm>

namespace fusegnet {

namespace {

void check_channels(const torch::Tensor& x, int64_t expected, const char* block) {
  if (x.dim() != 4) {
    throw ShapeError(std::string(block) + ": expected a 4-D NCHW tensor, got rank " +
                     std::to_string(x.dim()));
  }
  if (x.size(1) != expected) {
    throw ConfigError(std::string(block) + ": block built for " + std::to_string(expected) +
                      " channels, input has " + std::to_string(x.size(1)));
  }
}

}  // namespace

std::string to_string(Aggregation mode) {
  switch (mode) {
    case Aggregation::MaxOut:
      return "max_out";
    case Aggregation::Additive:
      return "additive";
    case Aggregation::Multiplicative:
      return "multiplicative";
    case Aggregation::Concat:
      return "concat";
  }
  throw ConfigError("unknown aggregation mode");
}

Aggregation aggregation_from_string(const std::string& name) {
  if (name == "max_out") return Aggregation::MaxOut;
  if (name == "additive") return Aggregation::Additive;
  if (name == "multiplicative") return Aggregation::Multiplicative;
  if (name == "concat") return Aggregation::Concat;
  throw ConfigError("unknown aggregation mode '" + name + "'");
}

int64_t bottleneck_width(int64_t channels, int64_t reduction_ratio) {
  if (channels < 1) throw ConfigError("channel count must be positive");
  if (reduction_ratio < 1) throw ConfigError("reduction ratio must be >= 1");
  return std::max<int64_t>(1, channels / std::min(reduction_ratio, channels));
}

void validate_feature_map(const torch::Tensor& x) {
  if (!x.defined() || x.dim() != 4) {
    throw ShapeError("feature map must be a 4-D NCHW tensor");
  }
  for (int64_t d = 0; d < 4; ++d) {
    if (x.size(d) < 1) throw ShapeError("feature map has an empty dimension");
  }
  if (!torch::isfinite(x).all().item<bool>()) {
    throw DataError("feature map contains non-finite values");
  }
}

ChannelSEImpl::ChannelSEImpl(int64_t channels, const ScseSettings& settings)
    : channels_(channels), hidden_(bottleneck_width(channels, settings.reduction_ratio)) {
  reduce = register_module(
      "reduce", torch::nn::Linear(torch::nn::LinearOptions(channels_, hidden_)
                                      .bias(settings.excitation_bias)));
  expand = register_module(
      "expand", torch::nn::Linear(torch::nn::LinearOptions(hidden_, channels_)
                                      .bias(settings.excitation_bias)));
}

torch::Tensor ChannelSEImpl::gate(const torch::Tensor& x) {
  check_channels(x, channels_, "cSE");
  ++evaluations_;
  auto squeezed = x.mean({2, 3});  // [N, C]
  auto excited = torch::sigmoid(expand(torch::relu(reduce(squeezed))));
  return excited.view({x.size(0), channels_, 1, 1});
}

torch::Tensor ChannelSEImpl::forward(const torch::Tensor& x) { return x * gate(x); }

SpatialSEImpl::SpatialSEImpl(int64_t channels, const ScseSettings& settings)
    : channels_(channels) {
  if (channels < 1) throw ConfigError("channel count must be positive");
  project = register_module(
      "project",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, 1, 1).bias(settings.projection_bias)));
}

torch::Tensor SpatialSEImpl::gate(const torch::Tensor& x) {
  check_channels(x, channels_, "sSE");
  ++evaluations_;
  return torch::sigmoid(project(x));
}

torch::Tensor SpatialSEImpl::forward(const torch::Tensor& x) { return x * gate(x); }

torch::Tensor aggregate(const torch::Tensor& channel_out, const torch::Tensor& spatial_out,
                        Aggregation mode) {
  switch (mode) {
    case Aggregation::MaxOut:
      return torch::max(channel_out, spatial_out);
    case Aggregation::Additive:
      return channel_out + spatial_out;
    case Aggregation::Multiplicative:
      return channel_out * spatial_out;
    case Aggregation::Concat:
      return torch::cat({channel_out, spatial_out}, 1);
  }
  throw ConfigError("unknown aggregation mode");
}

ScseImpl::ScseImpl(int64_t channels, const ScseSettings& settings) : settings_(settings) {
  to_string(settings.aggregation);  // rejects out-of-range enum values
  cse = register_module("cse", ChannelSE(channels, settings));
  sse = register_module("sse", SpatialSE(channels, settings));
}

torch::Tensor ScseImpl::forward(const torch::Tensor& x) {
  return aggregate(cse(x), sse(x), settings_.aggregation);
}

int64_t ScseImpl::output_channels() const {
  return settings_.aggregation == Aggregation::Concat ? 2 * cse->channels() : cse->channels();
}

ParallelScseImpl::ParallelScseImpl(int64_t channels, const ScseSettings& settings)
    : channels_(channels), settings_(settings) {
  cse = register_module("cse", ChannelSE(channels, settings));
  sse = register_module("sse", SpatialSE(channels, settings));
  if (!settings.shared_branches && !settings.shorted) {
    cse_additive = register_module("cse_additive", ChannelSE(channels, settings));
    sse_additive = register_module("sse_additive", SpatialSE(channels, settings));
  }
}

torch::Tensor ParallelScseImpl::additive_branch(const torch::Tensor& x, const torch::Tensor& c,
                                                const torch::Tensor& s) {
  if (settings_.shared_branches) return c + s;
  return cse_additive(x) + sse_additive(x);
}

torch::Tensor ParallelScseImpl::forward(const torch::Tensor& x) {
  return settings_.shorted ? shorted(x) : parallel(x);
}

torch::Tensor ParallelScseImpl::parallel(const torch::Tensor& x) {
  if (settings_.shorted) {
    throw ContractError("P-scSE block was built shorted; use the shorted path");
  }
  auto c = cse(x);
  auto s = sse(x);
  return torch::max(c, s) + additive_branch(x, c, s);
}

torch::Tensor ParallelScseImpl::shorted(const torch::Tensor& x) {
  if (!settings_.shorted) {
    throw ContractError("P-scSE block was not built shorted");
  }
  return x + (cse(x) + sse(x));
}

}  // namespace fusegnet
