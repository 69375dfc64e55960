#pragma once

// Test-only double-precision reference implementation of the TinyCNN
// forward pass and cross-entropy loss. Written with naive loops,
// independent of the optimized float32 kernels in frost_core; used as the
// finite-difference oracle for gradient checks and as a forward-pass
// cross-check.

#include <algorithm>
#include <cmath>
#include <vector>

#include "frost/nn.hpp"

namespace frost::testref {

struct Grid {
  int ch = 0, h = 0, w = 0;
  std::vector<double> v;
  Grid(int c, int hh, int ww) : ch(c), h(hh), w(ww) {
    v.assign(static_cast<std::size_t>(c) * hh * ww, 0.0);
  }
  double& at(int c, int y, int x) {
    return v[(static_cast<std::size_t>(c) * h + y) * w + x];
  }
  double at(int c, int y, int x) const {
    return v[(static_cast<std::size_t>(c) * h + y) * w + x];
  }
};

inline std::vector<Grid> conv3x3(const std::vector<Grid>& in,
                                 const Tensor& weight, const Tensor& bias) {
  const int out_ch = weight.shape[0];
  const int in_ch = weight.shape[1];
  std::vector<Grid> out;
  for (const Grid& g : in) {
    Grid o(out_ch, g.h, g.w);
    for (int oc = 0; oc < out_ch; ++oc)
      for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x) {
          double acc = bias.data[oc];
          for (int ic = 0; ic < in_ch; ++ic)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int sy = y + ky - 1, sx = x + kx - 1;
                if (sy < 0 || sy >= g.h || sx < 0 || sx >= g.w) continue;
                acc += static_cast<double>(
                           weight.data[((static_cast<std::size_t>(oc) * in_ch +
                                         ic) * 3 + ky) * 3 + kx]) *
                       g.at(ic, sy, sx);
              }
          o.at(oc, y, x) = acc;
        }
    out.push_back(std::move(o));
  }
  return out;
}

// Train-mode batch normalization (batch moments over all samples).
inline void bn_train(std::vector<Grid>& grids, const NormStats& stats,
                     double eps) {
  const int ch = grids.front().ch;
  const double n = static_cast<double>(grids.size()) * grids.front().h *
                   grids.front().w;
  for (int c = 0; c < ch; ++c) {
    double sum = 0.0;
    for (const Grid& g : grids)
      for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x) sum += g.at(c, y, x);
    const double mean = sum / n;
    double ss = 0.0;
    for (const Grid& g : grids)
      for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x) {
          const double d = g.at(c, y, x) - mean;
          ss += d * d;
        }
    const double invstd = 1.0 / std::sqrt(ss / n + eps);
    for (Grid& g : grids)
      for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x)
          g.at(c, y, x) = stats.gamma[c] * (g.at(c, y, x) - mean) * invstd +
                          stats.beta[c];
  }
}

inline void relu(std::vector<Grid>& grids) {
  for (Grid& g : grids)
    for (double& v : g.v) v = std::max(0.0, v);
}

inline std::vector<Grid> maxpool2(const std::vector<Grid>& in) {
  std::vector<Grid> out;
  for (const Grid& g : in) {
    Grid o(g.ch, g.h / 2, g.w / 2);
    for (int c = 0; c < g.ch; ++c)
      for (int y = 0; y < o.h; ++y)
        for (int x = 0; x < o.w; ++x) {
          double best = g.at(c, 2 * y, 2 * x);
          best = std::max(best, g.at(c, 2 * y, 2 * x + 1));
          best = std::max(best, g.at(c, 2 * y + 1, 2 * x));
          best = std::max(best, g.at(c, 2 * y + 1, 2 * x + 1));
          o.at(c, y, x) = best;
        }
    out.push_back(std::move(o));
  }
  return out;
}

// Mean cross-entropy of the batch, everything in double.
inline double forward_loss(const ModelParams& m, const StatSet& stats,
                           const Tensor& batch, const std::vector<int>& labels,
                           double eps = kBnEps) {
  const int b = batch.shape[0];
  std::vector<Grid> act;
  for (int n = 0; n < b; ++n) {
    Grid g(3, 64, 64);
    for (std::size_t i = 0; i < g.v.size(); ++i)
      g.v[i] = batch.data[static_cast<std::size_t>(n) * g.v.size() + i];
    act.push_back(std::move(g));
  }
  act = conv3x3(act, m.conv1.weight, m.conv1.bias);
  bn_train(act, stats.per_layer[0], eps);
  relu(act);
  act = maxpool2(act);
  act = conv3x3(act, m.conv2.weight, m.conv2.bias);
  bn_train(act, stats.per_layer[1], eps);
  relu(act);
  act = maxpool2(act);
  act = conv3x3(act, m.conv3.weight, m.conv3.bias);
  bn_train(act, stats.per_layer[2], eps);
  relu(act);

  double total = 0.0;
  for (int n = 0; n < b; ++n) {
    std::vector<double> feat(64, 0.0);
    for (int c = 0; c < 64; ++c) {
      double acc = 0.0;
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) acc += act[n].at(c, y, x);
      feat[c] = acc / 256.0;
    }
    std::vector<double> logits(m.class_count, 0.0);
    for (int k = 0; k < m.class_count; ++k) {
      double acc = m.fc_bias.data[k];
      for (int c = 0; c < 64; ++c)
        acc += static_cast<double>(
                   m.fc_weight.data[static_cast<std::size_t>(k) * 64 + c]) *
               feat[c];
      logits[k] = acc;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    total += -(logits[labels[n]] - mx - std::log(z));
  }
  return total / b;
}

}  // namespace frost::testref
