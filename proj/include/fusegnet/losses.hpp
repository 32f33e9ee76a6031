#pragma once

// Segmentation objectives on probability maps: soft dice, focal, and their
// weighted sum (equal weights by default).

#include <torch/torch.h>

namespace fusegnet {

struct LossSettings {
  double gamma = 2.0;        // focusing exponent
  double alpha = 0.25;       // weighting factor
  double smooth_eps = 1.0;   // dice smoothing
  double dice_weight = 1.0;
  double focal_weight = 1.0;
  double clip_delta = 1e-7;  // probabilities clipped to [delta, 1 - delta] before the log
  // false: alpha weighs every pixel; true: alpha for foreground, 1 - alpha for background.
  bool balanced_alpha = false;
};

// Throws ConfigError naming the offending field.
void validate(const LossSettings& settings);

// 1 - (2 sum(p g) + eps) / (sum(p) + sum(g) + eps) over the whole batch.
torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& gt, const LossSettings& s);

// mean(-alpha_t (1 - p_t)^gamma log(p_t)), p_t = pred on foreground, 1 - pred on background.
torch::Tensor focal_loss(const torch::Tensor& pred, const torch::Tensor& gt, const LossSettings& s);

torch::Tensor hybrid_loss(const torch::Tensor& pred, const torch::Tensor& gt, const LossSettings& s);

}  // namespace fusegnet
