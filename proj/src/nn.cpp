#include "frost/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "binio.hpp"
#include "frost/rng.hpp"
#include "parallel.hpp"

namespace frost {

namespace {

constexpr int kInputSize = 64;
constexpr int kStageCh[3] = {16, 32, 64};
constexpr int kFeatureDim = 64;

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor: non-positive extent");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
  data.assign(shape_size(shape), 0.0f);
}

NormStats NormStats::identity(int channels) {
  NormStats s;
  s.gamma.assign(channels, 1.0f);
  s.beta.assign(channels, 0.0f);
  s.running_mean.assign(channels, 0.0f);
  s.running_var.assign(channels, 1.0f);
  return s;
}

void validate_stats(const NormStats& s) {
  const std::size_t c = s.gamma.size();
  if (c == 0 || s.beta.size() != c || s.running_mean.size() != c ||
      s.running_var.size() != c)
    throw std::invalid_argument("norm stats: vector length mismatch");
  for (std::size_t i = 0; i < c; ++i) {
    if (!std::isfinite(s.gamma[i]) || !std::isfinite(s.beta[i]) ||
        !std::isfinite(s.running_mean[i]) || !std::isfinite(s.running_var[i]))
      throw std::invalid_argument("norm stats: non-finite value");
    if (s.running_var[i] < 0.0f)
      throw std::invalid_argument("norm stats: negative running variance");
  }
}

std::string ModelParams::arch_signature() const {
  std::ostringstream s;
  s << "tinycnn1 in=3x" << kInputSize << "x" << kInputSize << " conv="
    << conv1.out_ch << "," << conv2.out_ch << "," << conv3.out_ch
    << " classes=" << class_count;
  return s.str();
}

namespace {

ConvLayer make_conv(int in_ch, int out_ch, Rng& rng) {
  ConvLayer l;
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  l.weight = Tensor({out_ch, in_ch, 3, 3});
  l.bias = Tensor({out_ch});
  const double stddev = std::sqrt(2.0 / (in_ch * 9.0));
  for (float& w : l.weight.data)
    w = static_cast<float>(stddev * rng.normal());
  return l;
}

}  // namespace

ModelParams init_model(int class_count, std::uint64_t seed) {
  if (class_count < 2)
    throw std::invalid_argument("init_model: need at least 2 classes");
  Rng rng(seed);
  ModelParams m;
  m.class_count = class_count;
  m.conv1 = make_conv(3, kStageCh[0], rng);
  m.conv2 = make_conv(kStageCh[0], kStageCh[1], rng);
  m.conv3 = make_conv(kStageCh[1], kStageCh[2], rng);
  m.fc_weight = Tensor({class_count, kFeatureDim});
  m.fc_bias = Tensor({class_count});
  const double stddev = std::sqrt(1.0 / kFeatureDim);
  for (float& w : m.fc_weight.data)
    w = static_cast<float>(stddev * rng.normal());
  m.default_stats.id = "clean";
  for (int c : kStageCh) m.default_stats.per_layer.push_back(NormStats::identity(c));
  return m;
}

void check_stats_match(const ModelParams& model, const StatSet& stats) {
  if (stats.per_layer.size() != 3)
    throw std::invalid_argument("stat set: expected 3 layers for " +
                                model.arch_signature());
  for (int i = 0; i < 3; ++i) {
    validate_stats(stats.per_layer[i]);
    if (stats.per_layer[i].channels() != kStageCh[i])
      throw std::invalid_argument("stat set: channel mismatch at layer " +
                                  std::to_string(i));
  }
}

BoundModel swap_stats(const ModelParams& model, const StatSet& stats) {
  check_stats_match(model, stats);
  return BoundModel{&model, &stats};
}

// ---------------------------------------------------------------------------
// Layer kernels. All activations are NCHW float32.

namespace {

// Worker count for the layer kernels. Results are bitwise independent of
// the thread count: every output element is produced by exactly one task
// with a fixed internal accumulation order.
int g_nn_threads = 1;

}  // namespace

void set_nn_threads(int threads) {
  g_nn_threads = std::max(1, std::min(threads, 64));
}

int nn_threads() { return g_nn_threads; }

namespace {

constexpr int kMaxRowWidth = 64;

// One output plane (n, oc) per task; all nine taps fused into one pass per
// row, with a zero row standing in for the padding.
void conv3x3_forward(const float* x, float* y, const float* w, const float* b,
                     int batch, int in_ch, int out_ch, int h, int wdt) {
  const std::size_t plane = static_cast<std::size_t>(h) * wdt;
  static const float kZeroRow[kMaxRowWidth] = {};
  parallel_for(static_cast<std::size_t>(batch) * out_ch, g_nn_threads,
               [=](std::size_t t0, std::size_t t1) {
    for (std::size_t t = t0; t < t1; ++t) {
      const int n = static_cast<int>(t / out_ch);
      const int oc = static_cast<int>(t % out_ch);
      const float* xn = x + static_cast<std::size_t>(n) * in_ch * plane;
      float* yp = y + (static_cast<std::size_t>(n) * out_ch + oc) * plane;
      std::fill(yp, yp + plane, b[oc]);
      for (int ic = 0; ic < in_ch; ++ic) {
        const float* xp = xn + static_cast<std::size_t>(ic) * plane;
        const float* wk = w + (static_cast<std::size_t>(oc) * in_ch + ic) * 9;
        const float a0 = wk[0], a1 = wk[1], a2 = wk[2];
        const float b0 = wk[3], b1 = wk[4], b2 = wk[5];
        const float c0 = wk[6], c1 = wk[7], c2 = wk[8];
        for (int i = 0; i < h; ++i) {
          const float* r0 = i > 0 ? xp + static_cast<std::size_t>(i - 1) * wdt
                                  : kZeroRow;
          const float* r1 = xp + static_cast<std::size_t>(i) * wdt;
          const float* r2 = i + 1 < h
                                ? xp + static_cast<std::size_t>(i + 1) * wdt
                                : kZeroRow;
          float* yrow = yp + static_cast<std::size_t>(i) * wdt;
          yrow[0] += a1 * r0[0] + a2 * r0[1] + b1 * r1[0] + b2 * r1[1] +
                     c1 * r2[0] + c2 * r2[1];
          for (int j = 1; j < wdt - 1; ++j)
            yrow[j] += a0 * r0[j - 1] + a1 * r0[j] + a2 * r0[j + 1] +
                       b0 * r1[j - 1] + b1 * r1[j] + b2 * r1[j + 1] +
                       c0 * r2[j - 1] + c1 * r2[j] + c2 * r2[j + 1];
          const int e = wdt - 1;
          yrow[e] += a0 * r0[e - 1] + a1 * r0[e] + b0 * r1[e - 1] +
                     b1 * r1[e] + c0 * r2[e - 1] + c1 * r2[e];
        }
      }
    }
  });
}

// One input plane (n, ic) per task; gather form of the transposed kernel,
// which is a 3x3 correlation with the weights flipped in both axes.
void conv3x3_backward_input(const float* dy, float* dx, const float* w,
                            int batch, int in_ch, int out_ch, int h, int wdt) {
  const std::size_t plane = static_cast<std::size_t>(h) * wdt;
  static const float kZeroRow[kMaxRowWidth] = {};
  parallel_for(static_cast<std::size_t>(batch) * in_ch, g_nn_threads,
               [=](std::size_t t0, std::size_t t1) {
    for (std::size_t t = t0; t < t1; ++t) {
      const int n = static_cast<int>(t / in_ch);
      const int ic = static_cast<int>(t % in_ch);
      const float* dyn = dy + static_cast<std::size_t>(n) * out_ch * plane;
      float* dxp = dx + (static_cast<std::size_t>(n) * in_ch + ic) * plane;
      std::fill(dxp, dxp + plane, 0.0f);
      for (int oc = 0; oc < out_ch; ++oc) {
        const float* dyp = dyn + static_cast<std::size_t>(oc) * plane;
        const float* wk = w + (static_cast<std::size_t>(oc) * in_ch + ic) * 9;
        const float a0 = wk[8], a1 = wk[7], a2 = wk[6];
        const float b0 = wk[5], b1 = wk[4], b2 = wk[3];
        const float c0 = wk[2], c1 = wk[1], c2 = wk[0];
        for (int i = 0; i < h; ++i) {
          const float* r0 = i > 0 ? dyp + static_cast<std::size_t>(i - 1) * wdt
                                  : kZeroRow;
          const float* r1 = dyp + static_cast<std::size_t>(i) * wdt;
          const float* r2 = i + 1 < h
                                ? dyp + static_cast<std::size_t>(i + 1) * wdt
                                : kZeroRow;
          float* dxrow = dxp + static_cast<std::size_t>(i) * wdt;
          dxrow[0] += a1 * r0[0] + a2 * r0[1] + b1 * r1[0] + b2 * r1[1] +
                      c1 * r2[0] + c2 * r2[1];
          for (int j = 1; j < wdt - 1; ++j)
            dxrow[j] += a0 * r0[j - 1] + a1 * r0[j] + a2 * r0[j + 1] +
                        b0 * r1[j - 1] + b1 * r1[j] + b2 * r1[j + 1] +
                        c0 * r2[j - 1] + c1 * r2[j] + c2 * r2[j + 1];
          const int e = wdt - 1;
          dxrow[e] += a0 * r0[e - 1] + a1 * r0[e] + b0 * r1[e - 1] +
                      b1 * r1[e] + c0 * r2[e - 1] + c1 * r2[e];
        }
      }
    }
  });
}

// One output channel per task; db/dw slices are oc-disjoint. Nine running
// sums per (oc, ic) so each row is read once.
void conv3x3_backward_weights(const float* x, const float* dy, double* dw,
                              double* db, int batch, int in_ch, int out_ch,
                              int h, int wdt) {
  const std::size_t plane = static_cast<std::size_t>(h) * wdt;
  static const float kZeroRow[kMaxRowWidth] = {};
  parallel_for(static_cast<std::size_t>(out_ch), g_nn_threads,
               [=](std::size_t t0, std::size_t t1) {
    for (std::size_t oc = t0; oc < t1; ++oc) {
      for (int n = 0; n < batch; ++n) {
        const float* xn = x + static_cast<std::size_t>(n) * in_ch * plane;
        const float* dyp =
            dy + (static_cast<std::size_t>(n) * out_ch + oc) * plane;
        double bacc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) bacc += dyp[i];
        db[oc] += bacc;
        for (int ic = 0; ic < in_ch; ++ic) {
          const float* xp = xn + static_cast<std::size_t>(ic) * plane;
          double* dwk = dw + (oc * in_ch + ic) * 9;
          double a0 = 0, a1 = 0, a2 = 0, b0 = 0, b1 = 0, b2 = 0;
          double c0 = 0, c1 = 0, c2 = 0;
          for (int i = 0; i < h; ++i) {
            const float* dyrow = dyp + static_cast<std::size_t>(i) * wdt;
            const float* r0 = i > 0
                                  ? xp + static_cast<std::size_t>(i - 1) * wdt
                                  : kZeroRow;
            const float* r1 = xp + static_cast<std::size_t>(i) * wdt;
            const float* r2 = i + 1 < h
                                  ? xp + static_cast<std::size_t>(i + 1) * wdt
                                  : kZeroRow;
            {
              const double d = dyrow[0];
              a1 += d * r0[0]; a2 += d * r0[1];
              b1 += d * r1[0]; b2 += d * r1[1];
              c1 += d * r2[0]; c2 += d * r2[1];
            }
            for (int j = 1; j < wdt - 1; ++j) {
              const double d = dyrow[j];
              a0 += d * r0[j - 1]; a1 += d * r0[j]; a2 += d * r0[j + 1];
              b0 += d * r1[j - 1]; b1 += d * r1[j]; b2 += d * r1[j + 1];
              c0 += d * r2[j - 1]; c1 += d * r2[j]; c2 += d * r2[j + 1];
            }
            {
              const int e = wdt - 1;
              const double d = dyrow[e];
              a0 += d * r0[e - 1]; a1 += d * r0[e];
              b0 += d * r1[e - 1]; b1 += d * r1[e];
              c0 += d * r2[e - 1]; c1 += d * r2[e];
            }
          }
          dwk[0] += a0; dwk[1] += a1; dwk[2] += a2;
          dwk[3] += b0; dwk[4] += b1; dwk[5] += b2;
          dwk[6] += c0; dwk[7] += c1; dwk[8] += c2;
        }
      }
    }
  });
}

// Train-mode BN over NCHW: fills xhat and per-channel invstd, moments in
// double, optionally updates running stats.
void bn_forward_train(const float* x, float* y, float* xhat, double* invstd,
                      const NormStats& stats, NormStats* update,
                      double eps, double momentum, int batch, int ch,
                      std::size_t plane) {
  const std::size_t stride = static_cast<std::size_t>(ch) * plane;
  const std::size_t n = static_cast<std::size_t>(batch) * plane;
  parallel_for(static_cast<std::size_t>(ch), g_nn_threads,
               [&](std::size_t c0, std::size_t c1) {
  for (int c = static_cast<int>(c0); c < static_cast<int>(c1); ++c) {
    double sum = 0.0;
    for (int b = 0; b < batch; ++b) {
      const float* xp = x + b * stride + c * plane;
      for (std::size_t i = 0; i < plane; ++i) sum += xp[i];
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (int b = 0; b < batch; ++b) {
      const float* xp = x + b * stride + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = xp[i] - mean;
        ss += d * d;
      }
    }
    const double var = ss / static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    invstd[c] = is;
    const double g = stats.gamma[c];
    const double beta = stats.beta[c];
    for (int b = 0; b < batch; ++b) {
      const float* xp = x + b * stride + c * plane;
      float* yp = y + b * stride + c * plane;
      float* xh = xhat + b * stride + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double h = (xp[i] - mean) * is;
        xh[i] = static_cast<float>(h);
        yp[i] = static_cast<float>(g * h + beta);
      }
    }
    if (update) {
      const double unbiased =
          n > 1 ? var * static_cast<double>(n) / static_cast<double>(n - 1)
                : var;
      update->running_mean[c] = static_cast<float>(
          (1.0 - momentum) * update->running_mean[c] + momentum * mean);
      update->running_var[c] = static_cast<float>(
          (1.0 - momentum) * update->running_var[c] + momentum * unbiased);
    }
  }
  });
}

void bn_forward_eval(const float* x, float* y, const NormStats& stats,
                     double eps, int batch, int ch, std::size_t plane) {
  const std::size_t stride = static_cast<std::size_t>(ch) * plane;
  parallel_for(static_cast<std::size_t>(ch), g_nn_threads,
               [&](std::size_t c0, std::size_t c1) {
  for (int c = static_cast<int>(c0); c < static_cast<int>(c1); ++c) {
    const double is = 1.0 / std::sqrt(static_cast<double>(stats.running_var[c]) + eps);
    const float scale = static_cast<float>(stats.gamma[c] * is);
    const float shift = static_cast<float>(
        stats.beta[c] - stats.running_mean[c] * stats.gamma[c] * is);
    for (int b = 0; b < batch; ++b) {
      const float* xp = x + b * stride + c * plane;
      float* yp = y + b * stride + c * plane;
      for (std::size_t i = 0; i < plane; ++i) yp[i] = scale * xp[i] + shift;
    }
  }
  });
}

// BN backward through the batch-moment path. dy is consumed, dx produced;
// dgamma/dbeta accumulated in double.
void bn_backward(const float* dy, const float* xhat, const double* invstd,
                 const NormStats& stats, float* dx, double* dgamma,
                 double* dbeta, int batch, int ch, std::size_t plane) {
  const std::size_t stride = static_cast<std::size_t>(ch) * plane;
  const double n = static_cast<double>(batch) * static_cast<double>(plane);
  parallel_for(static_cast<std::size_t>(ch), g_nn_threads,
               [&](std::size_t c0, std::size_t c1) {
  for (int c = static_cast<int>(c0); c < static_cast<int>(c1); ++c) {
    double s1 = 0.0, s2 = 0.0;
    for (int b = 0; b < batch; ++b) {
      const float* dyp = dy + b * stride + c * plane;
      const float* xh = xhat + b * stride + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        s1 += dyp[i];
        s2 += static_cast<double>(dyp[i]) * xh[i];
      }
    }
    dbeta[c] += s1;
    dgamma[c] += s2;
    const double g = stats.gamma[c];
    const double is = invstd[c];
    const double m1 = s1 / n;
    const double m2 = s2 / n;
    for (int b = 0; b < batch; ++b) {
      const float* dyp = dy + b * stride + c * plane;
      const float* xh = xhat + b * stride + c * plane;
      float* dxp = dx + b * stride + c * plane;
      for (std::size_t i = 0; i < plane; ++i)
        dxp[i] = static_cast<float>(g * is * (dyp[i] - m1 - xh[i] * m2));
    }
  }
  });
}

void relu_forward(float* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] < 0.0f) x[i] = 0.0f;
}

// Mask taken from the forward output (post > 0 iff pre > 0).
void relu_backward(float* dy, const float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (y[i] <= 0.0f) dy[i] = 0.0f;
}

void maxpool2_forward(const float* x, float* y, unsigned char* idx, int batch,
                      int ch, int h, int w) {
  const int oh = h / 2, ow = w / 2;
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < ch; ++c) {
      const float* xp =
          x + (static_cast<std::size_t>(n) * ch + c) * h * w;
      float* yp = y + (static_cast<std::size_t>(n) * ch + c) * oh * ow;
      unsigned char* ip =
          idx + (static_cast<std::size_t>(n) * ch + c) * oh * ow;
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          const float* cell = xp + (2 * i) * w + 2 * j;
          float best = cell[0];
          int bi = 0;
          if (cell[1] > best) { best = cell[1]; bi = 1; }
          if (cell[w] > best) { best = cell[w]; bi = 2; }
          if (cell[w + 1] > best) { best = cell[w + 1]; bi = 3; }
          yp[i * ow + j] = best;
          ip[i * ow + j] = static_cast<unsigned char>(bi);
        }
    }
}

void maxpool2_backward(const float* dy, float* dx, const unsigned char* idx,
                       int batch, int ch, int h, int w) {
  const int oh = h / 2, ow = w / 2;
  std::fill(dx, dx + static_cast<std::size_t>(batch) * ch * h * w, 0.0f);
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < ch; ++c) {
      float* dxp = dx + (static_cast<std::size_t>(n) * ch + c) * h * w;
      const float* dyp =
          dy + (static_cast<std::size_t>(n) * ch + c) * oh * ow;
      const unsigned char* ip =
          idx + (static_cast<std::size_t>(n) * ch + c) * oh * ow;
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          const int bi = ip[i * ow + j];
          const int di = 2 * i + (bi >> 1);
          const int dj = 2 * j + (bi & 1);
          dxp[di * w + dj] += dyp[i * ow + j];
        }
    }
}

void gap_forward(const float* x, float* y, int batch, int ch,
                 std::size_t plane) {
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < ch; ++c) {
      const float* xp = x + (static_cast<std::size_t>(n) * ch + c) * plane;
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += xp[i];
      y[static_cast<std::size_t>(n) * ch + c] =
          static_cast<float>(acc / static_cast<double>(plane));
    }
}

void gap_backward(const float* dy, float* dx, int batch, int ch,
                  std::size_t plane) {
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < ch; ++c) {
      const float g = dy[static_cast<std::size_t>(n) * ch + c] /
                      static_cast<float>(plane);
      float* dxp = dx + (static_cast<std::size_t>(n) * ch + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) dxp[i] = g;
    }
}

void fc_forward(const float* x, float* y, const float* w, const float* b,
                int batch, int in_dim, int out_dim) {
  for (int n = 0; n < batch; ++n) {
    const float* xp = x + static_cast<std::size_t>(n) * in_dim;
    float* yp = y + static_cast<std::size_t>(n) * out_dim;
    for (int o = 0; o < out_dim; ++o) {
      const float* wp = w + static_cast<std::size_t>(o) * in_dim;
      double acc = b[o];
      for (int i = 0; i < in_dim; ++i) acc += static_cast<double>(wp[i]) * xp[i];
      yp[o] = static_cast<float>(acc);
    }
  }
}

// Softmax cross-entropy; returns total loss, writes dlogits (already
// averaged over the batch).
double softmax_ce(const float* logits, const std::vector<int>& labels,
                  float* dlogits, int batch, int classes) {
  double total = 0.0;
  const double inv_b = 1.0 / batch;
  for (int n = 0; n < batch; ++n) {
    const float* lp = logits + static_cast<std::size_t>(n) * classes;
    float* dp = dlogits ? dlogits + static_cast<std::size_t>(n) * classes
                        : nullptr;
    double mx = lp[0];
    for (int k = 1; k < classes; ++k) mx = std::max(mx, static_cast<double>(lp[k]));
    double z = 0.0;
    for (int k = 0; k < classes; ++k) z += std::exp(lp[k] - mx);
    const int t = labels[n];
    total += -(lp[t] - mx - std::log(z));
    if (dp)
      for (int k = 0; k < classes; ++k)
        dp[k] = static_cast<float>(
            (std::exp(lp[k] - mx) / z - (k == t ? 1.0 : 0.0)) * inv_b);
  }
  return total * inv_b;
}

// All intermediate buffers of one forward/backward pass.
struct Workspace {
  int batch = 0;
  int classes = 0;
  // stage activations
  std::vector<float> c1, h1, r1, p1;    // conv1 out, xhat1, relu1, pool1
  std::vector<float> c2, h2, r2, p2;
  std::vector<float> c3, h3, r3;
  std::vector<float> feat, logits;
  std::vector<unsigned char> i1, i2;
  double invstd[3][kFeatureDim] = {};

  void resize(int b, int classes_) {
    batch = b;
    classes = classes_;
    const std::size_t s1 = static_cast<std::size_t>(b) * 16 * 64 * 64;
    const std::size_t s1p = static_cast<std::size_t>(b) * 16 * 32 * 32;
    const std::size_t s2 = static_cast<std::size_t>(b) * 32 * 32 * 32;
    const std::size_t s2p = static_cast<std::size_t>(b) * 32 * 16 * 16;
    const std::size_t s3 = static_cast<std::size_t>(b) * 64 * 16 * 16;
    c1.resize(s1); h1.resize(s1); r1.resize(s1); p1.resize(s1p); i1.resize(s1p);
    c2.resize(s2); h2.resize(s2); r2.resize(s2); p2.resize(s2p); i2.resize(s2p);
    c3.resize(s3); h3.resize(s3); r3.resize(s3);
    feat.resize(static_cast<std::size_t>(b) * kFeatureDim);
    logits.resize(static_cast<std::size_t>(b) * classes);
  }
};

void check_batch(const Tensor& batch) {
  if (batch.shape.size() != 4 || batch.dim(1) != 3 ||
      batch.dim(2) != kInputSize || batch.dim(3) != kInputSize)
    throw std::invalid_argument("forward: batch must be Bx3x64x64");
  if (batch.dim(0) < 1) throw std::invalid_argument("forward: empty batch");
}

// Shared forward. In train mode batch moments are used and, when
// `update` is non-null, running statistics are refreshed in place.
void forward_pass(const ModelParams& m, const StatSet& stats,
                  const Tensor& batch, bool train, StatSet* update,
                  double bn_momentum, Workspace& ws) {
  check_batch(batch);
  check_stats_match(m, stats);
  const int b = batch.dim(0);
  ws.resize(b, m.class_count);
  const float* x = batch.data.data();

  conv3x3_forward(x, ws.c1.data(), m.conv1.weight.data.data(),
                  m.conv1.bias.data.data(), b, 3, 16, 64, 64);
  if (train)
    bn_forward_train(ws.c1.data(), ws.r1.data(), ws.h1.data(), ws.invstd[0],
                     stats.per_layer[0], update ? &update->per_layer[0] : nullptr,
                     kBnEps, bn_momentum, b, 16, 64 * 64);
  else
    bn_forward_eval(ws.c1.data(), ws.r1.data(), stats.per_layer[0], kBnEps, b,
                    16, 64 * 64);
  relu_forward(ws.r1.data(), ws.r1.size());
  maxpool2_forward(ws.r1.data(), ws.p1.data(), ws.i1.data(), b, 16, 64, 64);

  conv3x3_forward(ws.p1.data(), ws.c2.data(), m.conv2.weight.data.data(),
                  m.conv2.bias.data.data(), b, 16, 32, 32, 32);
  if (train)
    bn_forward_train(ws.c2.data(), ws.r2.data(), ws.h2.data(), ws.invstd[1],
                     stats.per_layer[1], update ? &update->per_layer[1] : nullptr,
                     kBnEps, bn_momentum, b, 32, 32 * 32);
  else
    bn_forward_eval(ws.c2.data(), ws.r2.data(), stats.per_layer[1], kBnEps, b,
                    32, 32 * 32);
  relu_forward(ws.r2.data(), ws.r2.size());
  maxpool2_forward(ws.r2.data(), ws.p2.data(), ws.i2.data(), b, 32, 32, 32);

  conv3x3_forward(ws.p2.data(), ws.c3.data(), m.conv3.weight.data.data(),
                  m.conv3.bias.data.data(), b, 32, 64, 16, 16);
  if (train)
    bn_forward_train(ws.c3.data(), ws.r3.data(), ws.h3.data(), ws.invstd[2],
                     stats.per_layer[2], update ? &update->per_layer[2] : nullptr,
                     kBnEps, bn_momentum, b, 64, 16 * 16);
  else
    bn_forward_eval(ws.c3.data(), ws.r3.data(), stats.per_layer[2], kBnEps, b,
                    64, 16 * 16);
  relu_forward(ws.r3.data(), ws.r3.size());
  gap_forward(ws.r3.data(), ws.feat.data(), b, 64, 16 * 16);
  fc_forward(ws.feat.data(), ws.logits.data(), m.fc_weight.data.data(),
             m.fc_bias.data.data(), b, kFeatureDim, m.class_count);
}

void zero_gradients(Gradients& g, const ModelParams& m) {
  auto zero_like = [](Tensor& t, const Tensor& src) {
    t.shape = src.shape;
    t.data.assign(src.data.size(), 0.0f);
  };
  zero_like(g.conv1_w, m.conv1.weight); zero_like(g.conv1_b, m.conv1.bias);
  zero_like(g.conv2_w, m.conv2.weight); zero_like(g.conv2_b, m.conv2.bias);
  zero_like(g.conv3_w, m.conv3.weight); zero_like(g.conv3_b, m.conv3.bias);
  zero_like(g.fc_w, m.fc_weight); zero_like(g.fc_b, m.fc_bias);
  for (int i = 0; i < 3; ++i) {
    g.bn_gamma[i].assign(kStageCh[i], 0.0f);
    g.bn_beta[i].assign(kStageCh[i], 0.0f);
  }
}

// Backward from dlogits; expects ws to hold the train-mode forward state.
void backward_pass(const ModelParams& m, const StatSet& stats,
                   const Tensor& batch, const float* dlogits,
                   bool frozen_backbone, Workspace& ws, Gradients& grads) {
  const int b = ws.batch;
  const int classes = m.class_count;

  std::vector<double> dW(m.fc_weight.data.size(), 0.0);
  std::vector<double> dB(classes, 0.0);
  std::vector<float> dfeat(static_cast<std::size_t>(b) * kFeatureDim, 0.0f);
  for (int n = 0; n < b; ++n) {
    const float* dl = dlogits + static_cast<std::size_t>(n) * classes;
    const float* f = ws.feat.data() + static_cast<std::size_t>(n) * kFeatureDim;
    float* df = dfeat.data() + static_cast<std::size_t>(n) * kFeatureDim;
    for (int o = 0; o < classes; ++o) {
      const float g = dl[o];
      dB[o] += g;
      const float* wp = m.fc_weight.data.data() + static_cast<std::size_t>(o) * kFeatureDim;
      double* dwp = dW.data() + static_cast<std::size_t>(o) * kFeatureDim;
      for (int i = 0; i < kFeatureDim; ++i) {
        if (!frozen_backbone) dwp[i] += static_cast<double>(g) * f[i];
        df[i] += g * wp[i];
      }
    }
  }
  if (!frozen_backbone) {
    for (std::size_t i = 0; i < dW.size(); ++i)
      grads.fc_w.data[i] = static_cast<float>(dW[i]);
    for (int i = 0; i < classes; ++i)
      grads.fc_b.data[i] = static_cast<float>(dB[i]);
  }

  // stage 3
  std::vector<float> d3(ws.r3.size());
  gap_backward(dfeat.data(), d3.data(), b, 64, 16 * 16);
  relu_backward(d3.data(), ws.r3.data(), d3.size());
  std::vector<float> dc3(ws.c3.size());
  {
    std::vector<double> dg(64, 0.0), db(64, 0.0);
    bn_backward(d3.data(), ws.h3.data(), ws.invstd[2], stats.per_layer[2],
                dc3.data(), dg.data(), db.data(), b, 64, 16 * 16);
    for (int i = 0; i < 64; ++i) {
      grads.bn_gamma[2][i] = static_cast<float>(dg[i]);
      grads.bn_beta[2][i] = static_cast<float>(db[i]);
    }
  }
  if (!frozen_backbone) {
    std::vector<double> dw(m.conv3.weight.data.size(), 0.0), db(64, 0.0);
    conv3x3_backward_weights(ws.p2.data(), dc3.data(), dw.data(), db.data(),
                             b, 32, 64, 16, 16);
    for (std::size_t i = 0; i < dw.size(); ++i)
      grads.conv3_w.data[i] = static_cast<float>(dw[i]);
    for (int i = 0; i < 64; ++i)
      grads.conv3_b.data[i] = static_cast<float>(db[i]);
  }
  std::vector<float> dp2(ws.p2.size());
  conv3x3_backward_input(dc3.data(), dp2.data(), m.conv3.weight.data.data(),
                         b, 32, 64, 16, 16);

  // stage 2
  std::vector<float> d2(ws.r2.size());
  maxpool2_backward(dp2.data(), d2.data(), ws.i2.data(), b, 32, 32, 32);
  relu_backward(d2.data(), ws.r2.data(), d2.size());
  std::vector<float> dc2(ws.c2.size());
  {
    std::vector<double> dg(32, 0.0), db(32, 0.0);
    bn_backward(d2.data(), ws.h2.data(), ws.invstd[1], stats.per_layer[1],
                dc2.data(), dg.data(), db.data(), b, 32, 32 * 32);
    for (int i = 0; i < 32; ++i) {
      grads.bn_gamma[1][i] = static_cast<float>(dg[i]);
      grads.bn_beta[1][i] = static_cast<float>(db[i]);
    }
  }
  if (!frozen_backbone) {
    std::vector<double> dw(m.conv2.weight.data.size(), 0.0), db(32, 0.0);
    conv3x3_backward_weights(ws.p1.data(), dc2.data(), dw.data(), db.data(),
                             b, 16, 32, 32, 32);
    for (std::size_t i = 0; i < dw.size(); ++i)
      grads.conv2_w.data[i] = static_cast<float>(dw[i]);
    for (int i = 0; i < 32; ++i)
      grads.conv2_b.data[i] = static_cast<float>(db[i]);
  }
  std::vector<float> dp1(ws.p1.size());
  conv3x3_backward_input(dc2.data(), dp1.data(), m.conv2.weight.data.data(),
                         b, 16, 32, 32, 32);

  // stage 1
  std::vector<float> d1(ws.r1.size());
  maxpool2_backward(dp1.data(), d1.data(), ws.i1.data(), b, 16, 64, 64);
  relu_backward(d1.data(), ws.r1.data(), d1.size());
  std::vector<float> dc1(ws.c1.size());
  {
    std::vector<double> dg(16, 0.0), db(16, 0.0);
    bn_backward(d1.data(), ws.h1.data(), ws.invstd[0], stats.per_layer[0],
                dc1.data(), dg.data(), db.data(), b, 16, 64 * 64);
    for (int i = 0; i < 16; ++i) {
      grads.bn_gamma[0][i] = static_cast<float>(dg[i]);
      grads.bn_beta[0][i] = static_cast<float>(db[i]);
    }
  }
  if (!frozen_backbone) {
    std::vector<double> dw(m.conv1.weight.data.size(), 0.0), db(16, 0.0);
    conv3x3_backward_weights(batch.data.data(), dc1.data(), dw.data(),
                             db.data(), b, 3, 16, 64, 64);
    for (std::size_t i = 0; i < dw.size(); ++i)
      grads.conv1_w.data[i] = static_cast<float>(dw[i]);
    for (int i = 0; i < 16; ++i)
      grads.conv1_b.data[i] = static_cast<float>(db[i]);
  }
}

}  // namespace

Tensor forward_eval(const BoundModel& bound, const Tensor& batch) {
  Workspace ws;
  forward_pass(*bound.model, *bound.stats, batch, /*train=*/false, nullptr,
               0.0, ws);
  Tensor logits({ws.batch, bound.model->class_count});
  logits.data = std::move(ws.logits);
  return logits;
}

Tensor forward_eval(const ModelParams& model, const StatSet& stats,
                    const Tensor& batch) {
  return forward_eval(swap_stats(model, stats), batch);
}

Tensor batchnorm_apply(const Tensor& x, NormStats& stats, bool train,
                       double eps, double momentum) {
  if (x.shape.size() != 4)
    throw std::invalid_argument("batchnorm_apply: expected BxCxHxW");
  validate_stats(stats);
  const int b = x.dim(0), c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  if (c != stats.channels())
    throw std::invalid_argument("batchnorm_apply: channel mismatch");
  Tensor y(x.shape);
  if (train) {
    std::vector<float> xhat(x.data.size());
    std::vector<double> invstd(c);
    bn_forward_train(x.data.data(), y.data.data(), xhat.data(), invstd.data(),
                     stats, &stats, eps, momentum, b, c, plane);
  } else {
    bn_forward_eval(x.data.data(), y.data.data(), stats, eps, b, c, plane);
  }
  return y;
}

double compute_loss(const ModelParams& model, const StatSet& stats,
                    const Tensor& batch, const std::vector<int>& labels) {
  if (labels.size() != static_cast<std::size_t>(batch.dim(0)))
    throw std::invalid_argument("compute_loss: label count mismatch");
  Workspace ws;
  forward_pass(model, stats, batch, /*train=*/true, nullptr, 0.0, ws);
  return softmax_ce(ws.logits.data(), labels, nullptr, ws.batch,
                    model.class_count);
}

double train_step_grads(const ModelParams& model, StatSet& stats,
                        const Tensor& batch, const std::vector<int>& labels,
                        double bn_momentum, bool frozen_backbone,
                        Gradients& grads) {
  if (labels.size() != static_cast<std::size_t>(batch.dim(0)))
    throw std::invalid_argument("train_step_grads: label count mismatch");
  Workspace ws;
  forward_pass(model, stats, batch, /*train=*/true, &stats, bn_momentum, ws);
  std::vector<float> dlogits(ws.logits.size());
  const double loss = softmax_ce(ws.logits.data(), labels, dlogits.data(),
                                 ws.batch, model.class_count);
  zero_gradients(grads, model);
  backward_pass(model, stats, batch, dlogits.data(), frozen_backbone, ws,
                grads);
  return loss;
}

void TrainConfig::validate() const {
  if (epochs < 0 || batch_size < 2 || lr <= 0.0 || momentum < 0.0 ||
      momentum >= 1.0 || weight_decay < 0.0 || bn_momentum <= 0.0 ||
      bn_momentum > 1.0)
    throw std::invalid_argument("train config: bad hyperparameters");
}

// ---------------------------------------------------------------------------
// Optimizers and training loops.

namespace {

struct SgdState {
  std::vector<float> velocity;

  void step(float* w, const float* g, std::size_t n, double lr,
            double momentum, double weight_decay) {
    if (velocity.size() != n) velocity.assign(n, 0.0f);
    const float wd = static_cast<float>(weight_decay);
    const float mom = static_cast<float>(momentum);
    const float step_lr = static_cast<float>(lr);
    for (std::size_t i = 0; i < n; ++i) {
      velocity[i] = mom * velocity[i] + (g[i] + wd * w[i]);
      w[i] -= step_lr * velocity[i];
    }
  }
};

double epoch_lr(const TrainConfig& cfg, int epoch) {
  if (!cfg.cosine_decay || cfg.epochs <= 1) return cfg.lr;
  return cfg.lr * 0.5 *
         (1.0 + std::cos(M_PI * static_cast<double>(epoch) / cfg.epochs));
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i)
    std::swap(idx[i - 1], idx[rng.index(i)]);
  return idx;
}

void check_finite_norm_params(const StatSet& stats, int epoch,
                              const char* who) {
  for (const NormStats& layer : stats.per_layer)
    for (std::size_t c = 0; c < layer.gamma.size(); ++c)
      if (!std::isfinite(layer.gamma[c]) || !std::isfinite(layer.beta[c]) ||
          !std::isfinite(layer.running_mean[c]) ||
          !std::isfinite(layer.running_var[c]))
        throw std::runtime_error(std::string(who) +
                                 ": parameters diverged (non-finite) at epoch " +
                                 std::to_string(epoch));
}

void check_training_inputs(const std::vector<Image>& images,
                           const std::vector<int>& labels, int class_count) {
  if (images.empty()) throw std::invalid_argument("training: empty dataset");
  if (images.size() != labels.size())
    throw std::invalid_argument("training: image/label count mismatch");
  for (int l : labels)
    if (l < 0 || l >= class_count)
      throw std::invalid_argument("training: label out of range");
}

}  // namespace

Tensor images_to_batch(const std::vector<Image>& images,
                       const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("images_to_batch: empty");
  Tensor batch({static_cast<int>(indices.size()), 3, kInputSize, kInputSize});
  const std::size_t plane = static_cast<std::size_t>(kInputSize) * kInputSize;
  for (std::size_t n = 0; n < indices.size(); ++n) {
    const Image& img = images[indices[n]];
    if (img.width != kInputSize || img.height != kInputSize)
      throw std::invalid_argument("images_to_batch: expected 64x64 images");
    float* dst = batch.data.data() + n * 3 * plane;
    for (int y = 0; y < kInputSize; ++y)
      for (int x = 0; x < kInputSize; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * kInputSize + x;
        if (img.channels == 3) {
          dst[p] = img.at(x, y, 0);
          dst[plane + p] = img.at(x, y, 1);
          dst[2 * plane + p] = img.at(x, y, 2);
        } else {
          const float v = img.at(x, y, 0);
          dst[p] = v;
          dst[plane + p] = v;
          dst[2 * plane + p] = v;
        }
      }
  }
  return batch;
}

Tensor image_to_batch(const Image& image) {
  std::vector<Image> one{image};
  return images_to_batch(one, {0});
}

ModelParams train_full(const std::vector<Image>& images,
                       const std::vector<int>& labels, int class_count,
                       const TrainConfig& cfg) {
  cfg.validate();
  check_training_inputs(images, labels, class_count);
  set_nn_threads(cfg.threads);
  ModelParams model = init_model(class_count, cfg.seed);
  Rng rng(Rng::derive(cfg.seed, 0x7261696eull));  // training stream

  SgdState s_c1w, s_c1b, s_c2w, s_c2b, s_c3w, s_c3b, s_fcw, s_fcb;
  SgdState s_g[3], s_b[3];
  Gradients grads;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = epoch_lr(cfg, epoch);
    const auto order = shuffled_indices(images.size(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0;
         start + static_cast<std::size_t>(cfg.batch_size) <= order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::vector<std::size_t> idx(
          order.begin() + static_cast<std::ptrdiff_t>(start),
          order.begin() + static_cast<std::ptrdiff_t>(start) + cfg.batch_size);
      const Tensor batch = images_to_batch(images, idx);
      std::vector<int> batch_labels(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i)
        batch_labels[i] = labels[idx[i]];

      const double loss =
          train_step_grads(model, model.default_stats, batch, batch_labels,
                           cfg.bn_momentum, /*frozen_backbone=*/false, grads);
      if (!std::isfinite(loss))
        throw std::runtime_error(
            "train_full: loss diverged (non-finite) at epoch " +
            std::to_string(epoch) + ", batch " + std::to_string(batches));
      loss_sum += loss;
      ++batches;

      s_c1w.step(model.conv1.weight.data.data(), grads.conv1_w.data.data(),
                 grads.conv1_w.data.size(), lr, cfg.momentum, cfg.weight_decay);
      s_c1b.step(model.conv1.bias.data.data(), grads.conv1_b.data.data(),
                 grads.conv1_b.data.size(), lr, cfg.momentum, 0.0);
      s_c2w.step(model.conv2.weight.data.data(), grads.conv2_w.data.data(),
                 grads.conv2_w.data.size(), lr, cfg.momentum, cfg.weight_decay);
      s_c2b.step(model.conv2.bias.data.data(), grads.conv2_b.data.data(),
                 grads.conv2_b.data.size(), lr, cfg.momentum, 0.0);
      s_c3w.step(model.conv3.weight.data.data(), grads.conv3_w.data.data(),
                 grads.conv3_w.data.size(), lr, cfg.momentum, cfg.weight_decay);
      s_c3b.step(model.conv3.bias.data.data(), grads.conv3_b.data.data(),
                 grads.conv3_b.data.size(), lr, cfg.momentum, 0.0);
      s_fcw.step(model.fc_weight.data.data(), grads.fc_w.data.data(),
                 grads.fc_w.data.size(), lr, cfg.momentum, cfg.weight_decay);
      s_fcb.step(model.fc_bias.data.data(), grads.fc_b.data.data(),
                 grads.fc_b.data.size(), lr, cfg.momentum, 0.0);
      for (int i = 0; i < 3; ++i) {
        s_g[i].step(model.default_stats.per_layer[i].gamma.data(),
                    grads.bn_gamma[i].data(), grads.bn_gamma[i].size(), lr,
                    cfg.momentum, 0.0);
        s_b[i].step(model.default_stats.per_layer[i].beta.data(),
                    grads.bn_beta[i].data(), grads.bn_beta[i].size(), lr,
                    cfg.momentum, 0.0);
      }
      check_finite_norm_params(model.default_stats, epoch, "train_full");
    }
    if (cfg.log)
      (*cfg.log) << "train epoch " << epoch << " lr " << lr << " loss "
                 << (batches ? loss_sum / batches : 0.0) << "\n";
  }
  return model;
}

namespace {

StatSet fit_stats_impl(const ModelParams& model,
                       const std::vector<Image>& images,
                       const std::vector<int>& labels, const TrainConfig& cfg,
                       const CorruptionTable& table,
                       const CorruptionKind* fixed_kind, StatSetId id) {
  cfg.validate();
  check_training_inputs(images, labels, model.class_count);
  set_nn_threads(cfg.threads);
  StatSet stats = model.default_stats;
  stats.id = std::move(id);
  Rng rng(Rng::derive(cfg.seed, 0x666974ull));  // fitting stream

  SgdState s_g[3], s_b[3];
  Gradients grads;
  const auto kinds = all_corruptions();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = epoch_lr(cfg, epoch);
    const auto order = shuffled_indices(images.size(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0;
         start + static_cast<std::size_t>(cfg.batch_size) <= order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<Image> corrupted;
      corrupted.reserve(cfg.batch_size);
      std::vector<int> batch_labels;
      std::vector<std::size_t> local(cfg.batch_size);
      batch_labels.reserve(cfg.batch_size);
      for (int i = 0; i < cfg.batch_size; ++i) {
        const std::size_t src = order[start + static_cast<std::size_t>(i)];
        const CorruptionKind kind =
            fixed_kind ? *fixed_kind
                       : kinds[static_cast<std::size_t>(rng.index(kCorruptionCount))];
        const SeverityLevel sev(4 + static_cast<int>(rng.index(2)));
        const std::uint64_t seed = rng.next_u64();
        corrupted.push_back(
            apply_corruption(images[src], kind, sev, seed, table));
        batch_labels.push_back(labels[src]);
        local[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i);
      }
      const Tensor batch = images_to_batch(corrupted, local);
      const double loss =
          train_step_grads(model, stats, batch, batch_labels, cfg.bn_momentum,
                           /*frozen_backbone=*/true, grads);
      if (!std::isfinite(loss))
        throw std::runtime_error("fit_stats: loss diverged at epoch " +
                                 std::to_string(epoch));
      loss_sum += loss;
      ++batches;
      for (int i = 0; i < 3; ++i) {
        s_g[i].step(stats.per_layer[i].gamma.data(), grads.bn_gamma[i].data(),
                    grads.bn_gamma[i].size(), lr, cfg.momentum, 0.0);
        s_b[i].step(stats.per_layer[i].beta.data(), grads.bn_beta[i].data(),
                    grads.bn_beta[i].size(), lr, cfg.momentum, 0.0);
      }
      check_finite_norm_params(stats, epoch, "fit_stats");
    }
    if (cfg.log)
      (*cfg.log) << "fit " << stats.id << " epoch " << epoch << " loss "
                 << (batches ? loss_sum / batches : 0.0) << "\n";
  }
  for (const NormStats& layer : stats.per_layer) validate_stats(layer);
  return stats;
}

}  // namespace

StatSet fit_generic_stats(const ModelParams& model,
                          const std::vector<Image>& images,
                          const std::vector<int>& labels,
                          const TrainConfig& cfg,
                          const CorruptionTable& table) {
  return fit_stats_impl(model, images, labels, cfg, table, nullptr, "s_da");
}

StatSet fit_specific_stats(const ModelParams& model, CorruptionKind kind,
                           const std::vector<Image>& images,
                           const std::vector<int>& labels,
                           const TrainConfig& cfg,
                           const CorruptionTable& table) {
  return fit_stats_impl(model, images, labels, cfg, table, &kind,
                        std::string("s_k_") + corruption_name(kind));
}

std::map<MacroCorruption, StatSet> macro_average_stats(
    const std::map<CorruptionKind, StatSet>& per_kind) {
  if (per_kind.size() != kCorruptionCount)
    throw std::invalid_argument("macro_average_stats: need all 9 StatSets");
  const StatSet& ref = per_kind.begin()->second;
  for (const auto& [kind, s] : per_kind) {
    if (s.per_layer.size() != ref.per_layer.size())
      throw std::invalid_argument("macro_average_stats: layer count mismatch");
    for (std::size_t l = 0; l < s.per_layer.size(); ++l)
      if (s.per_layer[l].channels() != ref.per_layer[l].channels())
        throw std::invalid_argument("macro_average_stats: channel mismatch");
  }

  std::map<MacroCorruption, StatSet> out;
  for (int m = 0; m < kMacroCount; ++m) {
    const auto macro = static_cast<MacroCorruption>(m);
    const auto members = macro_members(macro);
    StatSet avg;
    avg.id = std::string("s_macro_") + macro_name(macro);
    for (std::size_t l = 0; l < ref.per_layer.size(); ++l) {
      const int ch = ref.per_layer[l].channels();
      NormStats layer;
      layer.gamma.assign(ch, 0.0f);
      layer.beta.assign(ch, 0.0f);
      layer.running_mean.assign(ch, 0.0f);
      layer.running_var.assign(ch, 0.0f);
      const float inv = 1.0f / static_cast<float>(members.size());
      for (CorruptionKind kind : members) {
        const NormStats& src = per_kind.at(kind).per_layer[l];
        for (int c = 0; c < ch; ++c) {
          layer.gamma[c] += src.gamma[c] * inv;
          layer.beta[c] += src.beta[c] * inv;
          layer.running_mean[c] += src.running_mean[c] * inv;
          layer.running_var[c] += src.running_var[c] * inv;
        }
      }
      avg.per_layer.push_back(std::move(layer));
    }
    out.emplace(macro, std::move(avg));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization.

namespace {

constexpr char kCkptMagic[10] = {'F', 'R', 'O', 'S', 'T', 'C', 'K', 'P', 'T', '1'};
constexpr char kStatMagic[10] = {'F', 'R', 'O', 'S', 'T', 'S', 'T', 'A', 'T', '1'};
constexpr unsigned char kDtypeF32 = 1;

void write_named_tensor(std::ostream& out, const std::string& name,
                        const std::vector<int>& shape, const float* data,
                        std::size_t count) {
  binio::write_string(out, name);
  out.put(static_cast<char>(kDtypeF32));
  out.put(static_cast<char>(shape.size()));
  for (int d : shape) binio::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
  binio::write_f32_array(out, data, count);
}

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

NamedTensor read_named_tensor(std::istream& in) {
  NamedTensor t;
  t.name = binio::read_string(in);
  const int dtype = in.get();
  if (dtype != kDtypeF32)
    throw std::runtime_error("checkpoint: unsupported dtype");
  const int rank = in.get();
  if (rank < 1 || rank > 4) throw std::runtime_error("checkpoint: bad rank");
  std::size_t count = 1;
  for (int i = 0; i < rank; ++i) {
    const auto d = binio::read_le<std::uint64_t>(in);
    if (d == 0 || d > (1u << 20)) throw std::runtime_error("checkpoint: bad extent");
    t.shape.push_back(static_cast<int>(d));
    count *= d;
  }
  t.data.resize(count);
  binio::read_f32_array(in, t.data.data(), count);
  return t;
}

void serialize_model(const ModelParams& model, std::ostream& out) {
  out.write(kCkptMagic, sizeof kCkptMagic);
  binio::write_string(out, model.arch_signature());
  std::vector<std::pair<std::string, const Tensor*>> tensors = {
      {"conv1.weight", &model.conv1.weight}, {"conv1.bias", &model.conv1.bias},
      {"conv2.weight", &model.conv2.weight}, {"conv2.bias", &model.conv2.bias},
      {"conv3.weight", &model.conv3.weight}, {"conv3.bias", &model.conv3.bias},
      {"fc.weight", &model.fc_weight},       {"fc.bias", &model.fc_bias}};
  const int bn_tensors = 12;
  binio::write_le<std::uint32_t>(
      out, static_cast<std::uint32_t>(tensors.size() + bn_tensors));
  for (const auto& [name, t] : tensors)
    write_named_tensor(out, name, t->shape, t->data.data(), t->data.size());
  for (int i = 0; i < 3; ++i) {
    const NormStats& s = model.default_stats.per_layer[i];
    const std::string prefix = "bn" + std::to_string(i + 1) + ".";
    const std::vector<int> shape = {s.channels()};
    write_named_tensor(out, prefix + "gamma", shape, s.gamma.data(), s.gamma.size());
    write_named_tensor(out, prefix + "beta", shape, s.beta.data(), s.beta.size());
    write_named_tensor(out, prefix + "running_mean", shape,
                       s.running_mean.data(), s.running_mean.size());
    write_named_tensor(out, prefix + "running_var", shape,
                       s.running_var.data(), s.running_var.size());
  }
}

}  // namespace

void save_model(const ModelParams& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  serialize_model(model, out);
  if (!out) throw std::runtime_error("short write: " + path);
}

ModelParams load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[sizeof kCkptMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCkptMagic, sizeof magic) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const std::string signature = binio::read_string(in);
  const auto count = binio::read_le<std::uint32_t>(in);
  if (count != 20) throw std::runtime_error("checkpoint: bad tensor count");

  std::map<std::string, NamedTensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t = read_named_tensor(in);
    tensors.emplace(t.name, std::move(t));
  }
  auto take = [&tensors, &path](const std::string& name) {
    const auto it = tensors.find(name);
    if (it == tensors.end())
      throw std::runtime_error("checkpoint: missing tensor " + name + " in " +
                               path);
    return std::move(it->second);
  };

  ModelParams m;
  auto load_conv = [&take](ConvLayer& l, const std::string& prefix) {
    NamedTensor w = take(prefix + ".weight");
    NamedTensor b = take(prefix + ".bias");
    if (w.shape.size() != 4 || b.shape.size() != 1)
      throw std::runtime_error("checkpoint: bad conv shapes");
    l.out_ch = w.shape[0];
    l.in_ch = w.shape[1];
    l.weight.shape = w.shape;
    l.weight.data = std::move(w.data);
    l.bias.shape = b.shape;
    l.bias.data = std::move(b.data);
  };
  load_conv(m.conv1, "conv1");
  load_conv(m.conv2, "conv2");
  load_conv(m.conv3, "conv3");
  {
    NamedTensor w = take("fc.weight");
    NamedTensor b = take("fc.bias");
    if (w.shape.size() != 2 || b.shape.size() != 1)
      throw std::runtime_error("checkpoint: bad fc shapes");
    m.class_count = w.shape[0];
    m.fc_weight.shape = w.shape;
    m.fc_weight.data = std::move(w.data);
    m.fc_bias.shape = b.shape;
    m.fc_bias.data = std::move(b.data);
  }
  m.default_stats.id = "clean";
  for (int i = 0; i < 3; ++i) {
    const std::string prefix = "bn" + std::to_string(i + 1) + ".";
    NormStats s;
    s.gamma = take(prefix + "gamma").data;
    s.beta = take(prefix + "beta").data;
    s.running_mean = take(prefix + "running_mean").data;
    s.running_var = take(prefix + "running_var").data;
    m.default_stats.per_layer.push_back(std::move(s));
  }
  if (m.arch_signature() != signature)
    throw std::runtime_error("checkpoint: architecture mismatch: stored '" +
                             signature + "' vs '" + m.arch_signature() + "'");
  check_stats_match(m, m.default_stats);
  return m;
}

void save_statset(const StatSet& stats, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kStatMagic, sizeof kStatMagic);
  binio::write_string(out, stats.id);
  binio::write_le<std::uint32_t>(
      out, static_cast<std::uint32_t>(stats.per_layer.size()));
  for (const NormStats& s : stats.per_layer) {
    binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.channels()));
    binio::write_f32_array(out, s.gamma.data(), s.gamma.size());
    binio::write_f32_array(out, s.beta.data(), s.beta.size());
    binio::write_f32_array(out, s.running_mean.data(), s.running_mean.size());
    binio::write_f32_array(out, s.running_var.data(), s.running_var.size());
  }
  if (!out) throw std::runtime_error("short write: " + path);
}

StatSet load_statset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[sizeof kStatMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kStatMagic, sizeof magic) != 0)
    throw std::runtime_error("stat set: bad magic in " + path);
  StatSet stats;
  stats.id = binio::read_string(in);
  const auto layers = binio::read_le<std::uint32_t>(in);
  if (layers == 0 || layers > 64)
    throw std::runtime_error("stat set: bad layer count");
  for (std::uint32_t l = 0; l < layers; ++l) {
    const auto ch = binio::read_le<std::uint32_t>(in);
    if (ch == 0 || ch > 65536)
      throw std::runtime_error("stat set: bad channel count");
    NormStats s;
    s.gamma.resize(ch);
    s.beta.resize(ch);
    s.running_mean.resize(ch);
    s.running_var.resize(ch);
    binio::read_f32_array(in, s.gamma.data(), ch);
    binio::read_f32_array(in, s.beta.data(), ch);
    binio::read_f32_array(in, s.running_mean.data(), ch);
    binio::read_f32_array(in, s.running_var.data(), ch);
    validate_stats(s);
    stats.per_layer.push_back(std::move(s));
  }
  return stats;
}

std::size_t model_checkpoint_bytes(const ModelParams& model) {
  std::ostringstream out(std::ios::binary);
  serialize_model(model, out);
  return out.str().size();
}

std::size_t statset_payload_bytes(const StatSet& stats) {
  std::size_t floats = 0;
  for (const NormStats& s : stats.per_layer)
    floats += 4 * static_cast<std::size_t>(s.channels());
  return floats * sizeof(float);
}

}  // namespace frost
