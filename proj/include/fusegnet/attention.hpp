#pragma once

// Squeeze-and-excitation family used inside the decoder: channel SE (cSE),
// spatial SE (sSE), their aggregations (scSE) and the parallel variant that
// sums a max-out scSE with an additive scSE (P-scSE), optionally "shorted"
// so that the input itself replaces the max-out branch.
//
// All blocks consume NCHW tensors (batch, channels, height, width).

#include <torch/torch.h>

#include <atomic>
#include <cstdint>
#include <string>

namespace fusegnet {

enum class Aggregation { MaxOut, Additive, Multiplicative, Concat };

std::string to_string(Aggregation mode);
Aggregation aggregation_from_string(const std::string& name);

struct ScseSettings {
  int64_t reduction_ratio = 16;
  Aggregation aggregation = Aggregation::Additive;
  bool shorted = false;
  // cSE excitation layers carry biases; set false for biasless fixtures.
  bool excitation_bias = true;
  // bias of the sSE 1x1 projection
  bool projection_bias = true;
  // P-scSE only: when false, the additive branch owns a second cSE/sSE pair.
  bool shared_branches = true;
};

// Width of the cSE bottleneck: floor(C / min(r, C)), never below 1.
int64_t bottleneck_width(int64_t channels, int64_t reduction_ratio);

// Throws ShapeError unless x is a non-empty 4-D tensor, and DataError if it
// holds NaN or Inf.
void validate_feature_map(const torch::Tensor& x);

class ChannelSEImpl : public torch::nn::Module {
 public:
  ChannelSEImpl(int64_t channels, const ScseSettings& settings);

  // Per-channel gains in (0, 1), shape [N, C, 1, 1].
  torch::Tensor gate(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x);

  int64_t channels() const { return channels_; }
  int64_t hidden() const { return hidden_; }
  std::size_t evaluations() const { return evaluations_.load(); }

  torch::nn::Linear reduce{nullptr};
  torch::nn::Linear expand{nullptr};

 private:
  int64_t channels_;
  int64_t hidden_;
  std::atomic<std::size_t> evaluations_{0};
};
TORCH_MODULE(ChannelSE);

class SpatialSEImpl : public torch::nn::Module {
 public:
  SpatialSEImpl(int64_t channels, const ScseSettings& settings);

  // Per-pixel gains in (0, 1), shape [N, 1, H, W].
  torch::Tensor gate(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x);

  int64_t channels() const { return channels_; }
  std::size_t evaluations() const { return evaluations_.load(); }

  torch::nn::Conv2d project{nullptr};

 private:
  int64_t channels_;
  std::atomic<std::size_t> evaluations_{0};
};
TORCH_MODULE(SpatialSE);

// Combines one cSE and one sSE result with the configured operator.
torch::Tensor aggregate(const torch::Tensor& channel_out, const torch::Tensor& spatial_out,
                        Aggregation mode);

class ScseImpl : public torch::nn::Module {
 public:
  ScseImpl(int64_t channels, const ScseSettings& settings);

  torch::Tensor forward(const torch::Tensor& x);
  Aggregation aggregation() const { return settings_.aggregation; }
  int64_t output_channels() const;

  ChannelSE cse{nullptr};
  SpatialSE sse{nullptr};

 private:
  ScseSettings settings_;
};
TORCH_MODULE(Scse);

// P-scSE:          out = max(cSE(x), sSE(x)) + (cSE(x) + sSE(x))
// shorted P-scSE:  out = x + (cSE(x) + sSE(x))
class ParallelScseImpl : public torch::nn::Module {
 public:
  ParallelScseImpl(int64_t channels, const ScseSettings& settings);

  // Dispatches on settings.shorted.
  torch::Tensor forward(const torch::Tensor& x);
  // Throws ContractError when the block was built shorted.
  torch::Tensor parallel(const torch::Tensor& x);
  // Throws ContractError when the block was not built shorted.
  torch::Tensor shorted(const torch::Tensor& x);

  bool is_shorted() const { return settings_.shorted; }
  int64_t channels() const { return channels_; }

  ChannelSE cse{nullptr};
  SpatialSE sse{nullptr};
  // Only populated for an unshorted block with settings.shared_branches false.
  ChannelSE cse_additive{nullptr};
  SpatialSE sse_additive{nullptr};

 private:
  torch::Tensor additive_branch(const torch::Tensor& x, const torch::Tensor& c,
                                const torch::Tensor& s);

  int64_t channels_;
  ScseSettings settings_;
};
TORCH_MODULE(ParallelScse);

}  // namespace fusegnet
