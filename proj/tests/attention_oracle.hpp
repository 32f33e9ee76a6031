#pragma once

// Scalar reference implementations of the attention blocks. Every value is
// computed with explicit loops in double precision from weights read out of
// the modules, independently of the tensor code under test.

#include "fusegnet/attention.hpp"

#include <torch/torch.h>

#include <cmath>
#include <vector>

namespace fusegnet::testing {

struct Map {
  int64_t n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  Map() = default;
  Map(int64_t n_, int64_t c_, int64_t h_, int64_t w_)
      : n(n_), c(c_), h(h_), w(w_), v(static_cast<std::size_t>(n_ * c_ * h_ * w_), 0.0) {}

  double& at(int64_t i, int64_t ch, int64_t y, int64_t x) {
    return v[static_cast<std::size_t>(((i * c + ch) * h + y) * w + x)];
  }
  double at(int64_t i, int64_t ch, int64_t y, int64_t x) const {
    return v[static_cast<std::size_t>(((i * c + ch) * h + y) * w + x)];
  }
};

inline Map to_map(const torch::Tensor& t) {
  auto d = t.detach().to(torch::kFloat64).contiguous();
  Map m(d.size(0), d.size(1), d.size(2), d.size(3));
  const double* p = d.data_ptr<double>();
  std::copy(p, p + d.numel(), m.v.begin());
  return m;
}

inline double max_abs_diff(const Map& a, const torch::Tensor& t) {
  const Map b = to_map(t);
  if (a.v.size() != b.v.size() || a.c != b.c || a.h != b.h || a.w != b.w) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) worst = std::max(worst, std::abs(a.v[i] - b.v[i]));
  return worst;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline std::vector<double> flat(const torch::Tensor& t) {
  auto d = t.detach().to(torch::kFloat64).contiguous();
  return std::vector<double>(d.data_ptr<double>(), d.data_ptr<double>() + d.numel());
}

// Channel gains g[n][c].
inline std::vector<std::vector<double>> cse_gains(const Map& x, ChannelSEImpl& m) {
  const auto w1 = flat(m.reduce->weight);  // [hidden, C]
  const auto w2 = flat(m.expand->weight);  // [C, hidden]
  const int64_t hidden = m.hidden();
  std::vector<double> b1(static_cast<std::size_t>(hidden), 0.0);
  std::vector<double> b2(static_cast<std::size_t>(x.c), 0.0);
  if (m.reduce->bias.defined()) b1 = flat(m.reduce->bias);
  if (m.expand->bias.defined()) b2 = flat(m.expand->bias);
  std::vector<std::vector<double>> gains(static_cast<std::size_t>(x.n));
  for (int64_t i = 0; i < x.n; ++i) {
    std::vector<double> z(static_cast<std::size_t>(x.c), 0.0);
    for (int64_t ch = 0; ch < x.c; ++ch) {
      double s = 0.0;
      for (int64_t y = 0; y < x.h; ++y) {
        for (int64_t xx = 0; xx < x.w; ++xx) s += x.at(i, ch, y, xx);
      }
      z[static_cast<std::size_t>(ch)] = s / static_cast<double>(x.h * x.w);
    }
    std::vector<double> a(static_cast<std::size_t>(hidden), 0.0);
    for (int64_t j = 0; j < hidden; ++j) {
      double s = b1[static_cast<std::size_t>(j)];
      for (int64_t ch = 0; ch < x.c; ++ch) {
        s += w1[static_cast<std::size_t>(j * x.c + ch)] * z[static_cast<std::size_t>(ch)];
      }
      a[static_cast<std::size_t>(j)] = s > 0.0 ? s : 0.0;
    }
    auto& g = gains[static_cast<std::size_t>(i)];
    g.resize(static_cast<std::size_t>(x.c));
    for (int64_t ch = 0; ch < x.c; ++ch) {
      double s = b2[static_cast<std::size_t>(ch)];
      for (int64_t j = 0; j < hidden; ++j) {
        s += w2[static_cast<std::size_t>(ch * hidden + j)] * a[static_cast<std::size_t>(j)];
      }
      g[static_cast<std::size_t>(ch)] = sigmoid(s);
    }
  }
  return gains;
}

inline Map cse_oracle(const Map& x, ChannelSEImpl& m) {
  const auto g = cse_gains(x, m);
  Map out = x;
  for (int64_t i = 0; i < x.n; ++i) {
    for (int64_t ch = 0; ch < x.c; ++ch) {
      for (int64_t y = 0; y < x.h; ++y) {
        for (int64_t xx = 0; xx < x.w; ++xx) {
          out.at(i, ch, y, xx) = x.at(i, ch, y, xx) * g[static_cast<std::size_t>(i)][static_cast<std::size_t>(ch)];
        }
      }
    }
  }
  return out;
}

inline Map sse_oracle(const Map& x, SpatialSEImpl& m) {
  const auto w = flat(m.project->weight);  // [1, C, 1, 1]
  const double b = m.project->bias.defined() ? flat(m.project->bias)[0] : 0.0;
  Map out = x;
  for (int64_t i = 0; i < x.n; ++i) {
    for (int64_t y = 0; y < x.h; ++y) {
      for (int64_t xx = 0; xx < x.w; ++xx) {
        double s = b;
        for (int64_t ch = 0; ch < x.c; ++ch) s += w[static_cast<std::size_t>(ch)] * x.at(i, ch, y, xx);
        const double q = sigmoid(s);
        for (int64_t ch = 0; ch < x.c; ++ch) out.at(i, ch, y, xx) = x.at(i, ch, y, xx) * q;
      }
    }
  }
  return out;
}

inline Map combine(const Map& a, const Map& b, Aggregation mode) {
  if (mode == Aggregation::Concat) {
    Map out(a.n, a.c + b.c, a.h, a.w);
    for (int64_t i = 0; i < a.n; ++i) {
      for (int64_t ch = 0; ch < a.c + b.c; ++ch) {
        for (int64_t y = 0; y < a.h; ++y) {
          for (int64_t xx = 0; xx < a.w; ++xx) {
            out.at(i, ch, y, xx) = ch < a.c ? a.at(i, ch, y, xx) : b.at(i, ch - a.c, y, xx);
          }
        }
      }
    }
    return out;
  }
  Map out = a;
  for (std::size_t k = 0; k < a.v.size(); ++k) {
    switch (mode) {
      case Aggregation::MaxOut: out.v[k] = a.v[k] > b.v[k] ? a.v[k] : b.v[k]; break;
      case Aggregation::Additive: out.v[k] = a.v[k] + b.v[k]; break;
      case Aggregation::Multiplicative: out.v[k] = a.v[k] * b.v[k]; break;
      case Aggregation::Concat: break;
    }
  }
  return out;
}

inline Map scse_oracle(const Map& x, ScseImpl& m) {
  return combine(cse_oracle(x, *m.cse), sse_oracle(x, *m.sse), m.aggregation());
}

inline Map pscse_oracle(const Map& x, ParallelScseImpl& m) {
  const Map c = cse_oracle(x, *m.cse);
  const Map s = sse_oracle(x, *m.sse);
  if (m.is_shorted()) return combine(x, combine(c, s, Aggregation::Additive), Aggregation::Additive);
  Map additive = m.cse_additive ? combine(cse_oracle(x, *m.cse_additive),
                                          sse_oracle(x, *m.sse_additive), Aggregation::Additive)
                                : combine(c, s, Aggregation::Additive);
  return combine(combine(c, s, Aggregation::MaxOut), additive, Aggregation::Additive);
}

// Randomizes every parameter (default init leaves biases small) so that the
// oracles exercise all terms.
inline void randomize_parameters(torch::nn::Module& m, double scale = 0.8) {
  torch::NoGradGuard guard;
  for (auto& p : m.parameters()) p.uniform_(-scale, scale);
}

}  // namespace fusegnet::testing
