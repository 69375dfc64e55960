#include "frost/corruptions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "frost/detmath.hpp"
#include "frost/rng.hpp"

namespace frost {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

const char* kKindNames[kCorruptionCount] = {
    "contrast",     "brightness", "defocus_blur",
    "glass_blur",   "motion_blur", "zoom_blur",
    "impulse_noise", "shot_noise", "gaussian_noise"};

float clamp01(double v) {
  if (v < 0.0) return 0.0f;
  if (v > 1.0) return 1.0f;
  return static_cast<float>(v);
}

}  // namespace

const char* corruption_name(CorruptionKind kind) {
  return kKindNames[static_cast<int>(kind)];
}

CorruptionKind corruption_from_name(const std::string& name) {
  for (int i = 0; i < kCorruptionCount; ++i)
    if (name == kKindNames[i]) return static_cast<CorruptionKind>(i);
  throw std::invalid_argument("unknown corruption kind: " + name);
}

CorruptionKind corruption_from_code(int code) {
  if (code < 0 || code >= kCorruptionCount)
    throw std::invalid_argument("corruption code out of range: " +
                                std::to_string(code));
  return static_cast<CorruptionKind>(code);
}

SeverityLevel::SeverityLevel(int v) : value(v) {
  if (v < 1 || v > 5)
    throw std::invalid_argument("severity must be in 1..5, got " +
                                std::to_string(v));
}

CorruptionTable::CorruptionTable() {
  auto row = [this](CorruptionKind k, std::array<double, 5> v) {
    strength_[static_cast<int>(k)] = v;
  };
  row(CorruptionKind::kContrast, {0.4, 0.3, 0.2, 0.05, 0.025});
  row(CorruptionKind::kBrightness, {0.1, 0.2, 0.3, 0.4, 0.5});
  row(CorruptionKind::kDefocusBlur, {3, 4, 6, 8, 10});
  row(CorruptionKind::kGlassBlur, {0.7, 0.9, 1.0, 1.1, 1.5});
  row(CorruptionKind::kMotionBlur, {4, 5, 6, 7, 8});
  row(CorruptionKind::kZoomBlur, {1.16, 1.24, 1.31, 1.38, 1.45});
  row(CorruptionKind::kImpulseNoise, {0.03, 0.06, 0.09, 0.14, 0.20});
  row(CorruptionKind::kShotNoise, {60, 25, 12, 5, 3});
  row(CorruptionKind::kGaussianNoise, {0.08, 0.12, 0.18, 0.24, 0.30});
  glass_iters_ = {1, 2, 2, 3, 4};
  glass_dist_ = {1, 1, 2, 2, 3};
  glass_swap_prob_ = {0.001, 0.0015, 0.002, 0.0025, 0.003};
}

namespace {

const char* strength_key(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::kContrast: return "factor";
    case CorruptionKind::kBrightness: return "offset";
    case CorruptionKind::kDefocusBlur: return "radius";
    case CorruptionKind::kGlassBlur: return "sigma";
    case CorruptionKind::kMotionBlur: return "length";
    case CorruptionKind::kZoomBlur: return "zoom";
    case CorruptionKind::kImpulseNoise: return "fraction";
    case CorruptionKind::kShotNoise: return "scale";
    case CorruptionKind::kGaussianNoise: return "sigma";
  }
  return "";
}

}  // namespace

CorruptionTable::CorruptionTable(const Config& cfg) : CorruptionTable() {
  for (int k = 0; k < kCorruptionCount; ++k) {
    const auto kind = static_cast<CorruptionKind>(k);
    for (int s = 1; s <= 5; ++s) {
      const std::string key = std::string("corrupt.") + kKindNames[k] + "." +
                              strength_key(kind) + "." + std::to_string(s);
      strength_[k][s - 1] = cfg.get_double(key, strength_[k][s - 1]);
    }
  }
  for (int s = 1; s <= 5; ++s) {
    glass_iters_[s - 1] = cfg.get_int(
        "corrupt.glass_blur.iters." + std::to_string(s), glass_iters_[s - 1]);
    glass_dist_[s - 1] = cfg.get_int(
        "corrupt.glass_blur.dist." + std::to_string(s), glass_dist_[s - 1]);
    glass_swap_prob_[s - 1] =
        cfg.get_double("corrupt.glass_blur.swap_prob." + std::to_string(s),
                       glass_swap_prob_[s - 1]);
  }
}

CorruptionParams CorruptionTable::params(CorruptionKind kind,
                                         SeverityLevel severity) const {
  CorruptionParams p;
  p.kind = kind;
  p.severity = severity.value;
  p.strength = strength_[static_cast<int>(kind)][severity.value - 1];
  if (kind == CorruptionKind::kGlassBlur) {
    p.glass_iterations = glass_iters_[severity.value - 1];
    p.glass_max_shift_px = glass_dist_[severity.value - 1];
    p.glass_swap_prob = glass_swap_prob_[severity.value - 1];
  }
  return p;
}

CorruptionParams corruption_params(CorruptionKind kind,
                                   SeverityLevel severity) {
  static const CorruptionTable table;
  return table.params(kind, severity);
}

namespace {

Image apply_contrast(const Image& img, double factor) {
  double sum = 0.0;
  for (float v : img.data) sum += v;
  const double mean = sum / static_cast<double>(img.data.size());
  Image out(img.width, img.height, img.channels);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    out.data[i] = clamp01((img.data[i] - mean) * factor + mean);
  return out;
}

Image apply_brightness(const Image& img, double offset) {
  Image out(img.width, img.height, img.channels);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    out.data[i] = clamp01(img.data[i] + offset);
  return out;
}

Image apply_gaussian_noise(const Image& img, double sigma, Rng& rng) {
  Image out(img.width, img.height, img.channels);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    out.data[i] = clamp01(img.data[i] + sigma * rng.normal());
  return out;
}

Image apply_shot_noise(const Image& img, double photon_scale, Rng& rng) {
  Image out(img.width, img.height, img.channels);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double lambda = static_cast<double>(img.data[i]) * photon_scale;
    out.data[i] = clamp01(static_cast<double>(rng.poisson(lambda)) /
                          photon_scale);
  }
  return out;
}

Image apply_impulse_noise(const Image& img, double fraction, Rng& rng) {
  Image out = img;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double u = rng.uniform();
    if (u < fraction * 0.5) out.data[i] = 0.0f;
    else if (u < fraction) out.data[i] = 1.0f;
  }
  return out;
}

// Dense 2-D convolution with reflect-101 padding; kernel entries are
// (dy, dx, w) triples with w already normalized.
struct KernelTap {
  int dy, dx;
  double w;
};

Image convolve(const Image& img, const std::vector<KernelTap>& taps) {
  Image out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (const KernelTap& t : taps) {
          const int sy = reflect_index(y + t.dy, img.height);
          const int sx = reflect_index(x + t.dx, img.width);
          acc += t.w * img.at(sx, sy, c);
        }
        out.at(x, y, c) = clamp01(acc);
      }
    }
  }
  return out;
}

Image apply_defocus_blur(const Image& img, double radius) {
  const int r = static_cast<int>(radius);
  std::vector<KernelTap> taps;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (dx * dx + dy * dy <= r * r) taps.push_back({dy, dx, 1.0});
  for (KernelTap& t : taps) t.w = 1.0 / static_cast<double>(taps.size());
  return convolve(img, taps);
}

Image apply_motion_blur(const Image& img, double length, Rng& rng) {
  // One angle per image; the kernel is a unit-mass line through the origin
  // rasterized with bilinear splatting.
  const double angle = rng.uniform() * kTwoPi;
  const double dirx = detmath::det_cos(angle);
  const double diry = detmath::det_sin(angle);
  const int L = static_cast<int>(length);
  const int r = L / 2;
  const int dim = 2 * r + 1;
  std::vector<double> kernel(static_cast<std::size_t>(dim) * dim, 0.0);
  const int samples = 4 * L;
  for (int s = 0; s < samples; ++s) {
    const double t = (static_cast<double>(s) / (samples - 1) - 0.5) *
                     static_cast<double>(L - 1);
    const double px = t * dirx + r;
    const double py = t * diry + r;
    const int x0 = static_cast<int>(px);
    const int y0 = static_cast<int>(py);
    const double fx = px - x0;
    const double fy = py - y0;
    for (int oy = 0; oy <= 1; ++oy) {
      for (int ox = 0; ox <= 1; ++ox) {
        const int xx = x0 + ox;
        const int yy = y0 + oy;
        if (xx < 0 || xx >= dim || yy < 0 || yy >= dim) continue;
        const double w = (ox ? fx : 1.0 - fx) * (oy ? fy : 1.0 - fy);
        kernel[static_cast<std::size_t>(yy) * dim + xx] += w;
      }
    }
  }
  double total = 0.0;
  for (double w : kernel) total += w;
  std::vector<KernelTap> taps;
  for (int yy = 0; yy < dim; ++yy)
    for (int xx = 0; xx < dim; ++xx) {
      const double w = kernel[static_cast<std::size_t>(yy) * dim + xx];
      if (w > 0.0) taps.push_back({yy - r, xx - r, w / total});
    }
  return convolve(img, taps);
}

Image apply_zoom_blur(const Image& img, double max_zoom) {
  // Mean of center-anchored rescales at factors 1.00, 1.02, ... <= max_zoom.
  std::vector<double> acc(img.data.size(), 0.0);
  int count = 0;
  const double cx = (img.width - 1) * 0.5;
  const double cy = (img.height - 1) * 0.5;
  for (double z = 1.0; z <= max_zoom + 1e-9; z += 0.02) {
    for (int y = 0; y < img.height; ++y) {
      const double sy = cy + (y - cy) / z;
      const int y0 = std::min(static_cast<int>(sy), img.height - 1);
      const int y1 = std::min(y0 + 1, img.height - 1);
      const double wy = sy - y0;
      for (int x = 0; x < img.width; ++x) {
        const double sx = cx + (x - cx) / z;
        const int x0 = std::min(static_cast<int>(sx), img.width - 1);
        const int x1 = std::min(x0 + 1, img.width - 1);
        const double wx = sx - x0;
        for (int c = 0; c < img.channels; ++c) {
          const double top =
              (1.0 - wx) * img.at(x0, y0, c) + wx * img.at(x1, y0, c);
          const double bot =
              (1.0 - wx) * img.at(x0, y1, c) + wx * img.at(x1, y1, c);
          acc[(static_cast<std::size_t>(y) * img.width + x) * img.channels +
              c] += (1.0 - wy) * top + wy * bot;
        }
      }
    }
    ++count;
  }
  Image out(img.width, img.height, img.channels);
  for (std::size_t i = 0; i < acc.size(); ++i)
    out.data[i] = clamp01(acc[i] / count);
  return out;
}

Image gaussian_blur(const Image& img, double sigma) {
  const int r = std::max(1, static_cast<int>(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double total = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = detmath::det_exp(-0.5 * i * i / (sigma * sigma));
    total += k[i + r];
  }
  for (double& w : k) w /= total;

  // Separable passes, double intermediate.
  std::vector<double> tmp(img.data.size());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i)
          acc += k[i + r] * img.at(reflect_index(x + i, img.width), y, c);
        tmp[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] =
            acc;
      }
  Image out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) {
          const int sy = reflect_index(y + i, img.height);
          acc += k[i + r] *
                 tmp[(static_cast<std::size_t>(sy) * img.width + x) *
                         img.channels +
                     c];
        }
        out.at(x, y, c) = clamp01(acc);
      }
  return out;
}

Image apply_glass_blur(const Image& img, const CorruptionParams& p, Rng& rng) {
  Image out = gaussian_blur(img, p.strength);
  const int d = p.glass_max_shift_px;
  for (int it = 0; it < p.glass_iterations; ++it) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        // Draws happen for every pixel so the stream layout is fixed.
        const double roll = rng.uniform();
        const int dx = static_cast<int>(rng.index(2 * d + 1)) - d;
        const int dy = static_cast<int>(rng.index(2 * d + 1)) - d;
        if (roll >= p.glass_swap_prob) continue;
        const int sx = std::clamp(x + dx, 0, img.width - 1);
        const int sy = std::clamp(y + dy, 0, img.height - 1);
        for (int c = 0; c < img.channels; ++c)
          std::swap(out.at(x, y, c), out.at(sx, sy, c));
      }
    }
  }
  return out;
}

}  // namespace

Image apply_corruption(const Image& img, CorruptionKind kind,
                       SeverityLevel severity, std::uint64_t seed,
                       const CorruptionTable& table) {
  validate_image(img);
  if (img.width < 8 || img.height < 8)
    throw std::invalid_argument("apply_corruption: image smaller than 8x8");
  const CorruptionParams p = table.params(kind, severity);
  Rng rng(seed);
  switch (kind) {
    case CorruptionKind::kContrast: return apply_contrast(img, p.strength);
    case CorruptionKind::kBrightness: return apply_brightness(img, p.strength);
    case CorruptionKind::kDefocusBlur: return apply_defocus_blur(img, p.strength);
    case CorruptionKind::kGlassBlur: return apply_glass_blur(img, p, rng);
    case CorruptionKind::kMotionBlur: return apply_motion_blur(img, p.strength, rng);
    case CorruptionKind::kZoomBlur: return apply_zoom_blur(img, p.strength);
    case CorruptionKind::kImpulseNoise: return apply_impulse_noise(img, p.strength, rng);
    case CorruptionKind::kShotNoise: return apply_shot_noise(img, p.strength, rng);
    case CorruptionKind::kGaussianNoise: return apply_gaussian_noise(img, p.strength, rng);
  }
  throw std::invalid_argument("apply_corruption: bad kind");
}

std::vector<Image> make_corrupted_set(const std::vector<Image>& images,
                                      CorruptionKind kind,
                                      SeverityLevel severity,
                                      std::uint64_t base_seed,
                                      const CorruptionTable& table) {
  if (images.empty())
    throw std::invalid_argument("make_corrupted_set: empty input");
  std::vector<Image> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i)
    out.push_back(apply_corruption(images[i], kind, severity,
                                   base_seed ^ static_cast<std::uint64_t>(i),
                                   table));
  return out;
}

}  // namespace frost
