#include "fusegnet/losses.hpp"

#include "fusegnet/error.hpp"

namespace fusegnet {

namespace {

void check_inputs(const torch::Tensor& pred, const torch::Tensor& gt) {
  if (!pred.defined() || !gt.defined() || pred.sizes() != gt.sizes()) {
    throw ShapeError("prediction and ground truth must have equal shapes");
  }
  if (pred.numel() == 0) throw ShapeError("loss inputs are empty");
  auto p = pred.detach();
  if (!torch::isfinite(p).all().item<bool>() || p.min().item<double>() < 0.0 ||
      p.max().item<double>() > 1.0) {
    throw DataError("predictions must be finite probabilities in [0, 1]");
  }
  auto g = gt.detach();
  if (!torch::logical_or(g == 0, g == 1).all().item<bool>()) {
    throw DataError("ground truth must be binary (0 or 1)");
  }
}

}  // namespace

void validate(const LossSettings& s) {
  if (!(s.gamma >= 0.0)) throw ConfigError("loss.gamma must be >= 0");
  if (!(s.alpha >= 0.0 && s.alpha <= 1.0)) throw ConfigError("loss.alpha must lie in [0, 1]");
  if (!(s.smooth_eps > 0.0)) throw ConfigError("loss.smooth_eps must be > 0");
  if (!(s.dice_weight >= 0.0)) throw ConfigError("loss.dice_weight must be >= 0");
  if (!(s.focal_weight >= 0.0)) throw ConfigError("loss.focal_weight must be >= 0");
  if (!(s.clip_delta > 0.0 && s.clip_delta < 0.5)) {
    throw ConfigError("loss.clip_delta must lie in (0, 0.5)");
  }
}

torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& gt, const LossSettings& s) {
  check_inputs(pred, gt);
  auto target = gt.to(pred.dtype());
  auto intersection = (pred * target).sum();
  auto total = pred.sum() + target.sum();
  return 1.0 - (2.0 * intersection + s.smooth_eps) / (total + s.smooth_eps);
}

torch::Tensor focal_loss(const torch::Tensor& pred, const torch::Tensor& gt, const LossSettings& s) {
  check_inputs(pred, gt);
  auto target = gt.to(pred.dtype());
  auto p = pred.clamp(s.clip_delta, 1.0 - s.clip_delta);
  auto p_t = target * p + (1.0 - target) * (1.0 - p);
  auto modulating = s.gamma == 0.0 ? torch::ones_like(p_t) : torch::pow(1.0 - p_t, s.gamma);
  auto weight = s.balanced_alpha ? target * s.alpha + (1.0 - target) * (1.0 - s.alpha)
                                 : torch::full_like(p_t, s.alpha);
  return (-weight * modulating * torch::log(p_t)).mean();
}

torch::Tensor hybrid_loss(const torch::Tensor& pred, const torch::Tensor& gt, const LossSettings& s) {
  return s.dice_weight * dice_loss(pred, gt, s) + s.focal_weight * focal_loss(pred, gt, s);
}

}  // namespace fusegnet
