#pragma once

// Central finite-difference check of autograd gradients in double precision.

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace fusegnet::testing {

struct GradcheckResult {
  double worst_relative_error = 0.0;
  std::size_t tensors_checked = 0;
};

// Checks d/dT of L = sum(f(x) * R) for T = x and every parameter of
// `module` (may be null). R is a fixed random weighting of the output.
// Relative error per tensor is ||analytic - numeric|| / max(||numeric||, 1e-8).
inline GradcheckResult gradcheck(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                                 torch::Tensor x, torch::nn::Module* module, double h = 1e-6) {
  x = x.detach().to(torch::kFloat64).clone().set_requires_grad(true);
  torch::Tensor weight;
  {
    torch::NoGradGuard guard;
    weight = torch::rand_like(f(x)) + 0.5;
  }
  auto objective = [&] { return (f(x) * weight).sum(); };

  std::vector<torch::Tensor> targets{x};
  if (module != nullptr) {
    for (auto& p : module->parameters()) targets.push_back(p);
  }
  for (auto& t : targets) {
    if (t.grad().defined()) t.mutable_grad().zero_();
  }
  objective().backward();

  GradcheckResult result;
  for (auto& t : targets) {
    auto analytic = t.grad().defined() ? t.grad().clone() : torch::zeros_like(t);
    auto numeric = torch::zeros_like(t);
    {
      torch::NoGradGuard guard;
      auto flat_t = t.view({-1});
      auto flat_n = numeric.view({-1});
      for (int64_t k = 0; k < flat_t.numel(); ++k) {
        const double orig = flat_t[k].item<double>();
        flat_t[k] = orig + h;
        const double plus = objective().item<double>();
        flat_t[k] = orig - h;
        const double minus = objective().item<double>();
        flat_t[k] = orig;
        flat_n[k] = (plus - minus) / (2.0 * h);
      }
    }
    const double err = (analytic - numeric).norm().item<double>() /
                       std::max(numeric.norm().item<double>(), 1e-8);
    result.worst_relative_error = std::max(result.worst_relative_error, err);
    ++result.tensors_checked;
  }
  return result;
}

}  // namespace fusegnet::testing
