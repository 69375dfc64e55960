#include "frost/spectral.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "binio.hpp"

namespace frost {

double SpectralFeature::l2_norm() const {
  double acc = 0.0;
  for (float v : values) acc += static_cast<double>(v) * v;
  return std::sqrt(acc);
}

double feature_distance(const SpectralFeature& a, const SpectralFeature& b) {
  if (a.n != b.n || a.values.size() != b.values.size())
    throw std::invalid_argument("feature_distance: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = static_cast<double>(a.values[i]) - b.values[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

Image resize_to_64(const Image& img) {
  validate_image(img);
  if (img.width < 8 || img.height < 8)
    throw std::invalid_argument("resize_to_64: image smaller than 8x8");
  const Image gray = to_grayscale(img);
  if (gray.width == kSpectrumSize && gray.height == kSpectrumSize) return gray;
  return resize_bilinear(gray, kSpectrumSize, kSpectrumSize);
}

namespace {

constexpr int kLogN = 6;  // 64 = 2^6

struct FftPlan {
  std::array<int, kSpectrumSize> bitrev;
  // Twiddles w[k] = exp(-2*pi*i*k/64), k in [0, 32).
  std::array<std::complex<double>, kSpectrumSize / 2> twiddle;

  FftPlan() {
    for (int i = 0; i < kSpectrumSize; ++i) {
      int r = 0;
      for (int b = 0; b < kLogN; ++b)
        if (i & (1 << b)) r |= 1 << (kLogN - 1 - b);
      bitrev[i] = r;
    }
    twiddle[0] = {1.0, 0.0};  // exact, keeps DC-offset paths bit-clean
    for (int k = 1; k < kSpectrumSize / 2; ++k) {
      const double ang = -2.0 * M_PI * k / kSpectrumSize;
      twiddle[k] = {std::cos(ang), std::sin(ang)};
    }
  }
};

const FftPlan& plan() {
  static const FftPlan p;
  return p;
}

// In-place radix-2 DIT on 64 complex values with unit stride.
void fft64(std::complex<double>* a) {
  const FftPlan& p = plan();
  for (int i = 0; i < kSpectrumSize; ++i) {
    const int j = p.bitrev[i];
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int len = 2; len <= kSpectrumSize; len <<= 1) {
    const int half = len >> 1;
    const int step = kSpectrumSize / len;
    for (int base = 0; base < kSpectrumSize; base += len) {
      for (int k = 0; k < half; ++k) {
        const std::complex<double> w = p.twiddle[k * step];
        const std::complex<double> u = a[base + k];
        const std::complex<double> t = w * a[base + k + half];
        a[base + k] = u + t;
        a[base + k + half] = u - t;
      }
    }
  }
}

}  // namespace

ComplexSpectrum fft2(const Image& img64) {
  if (img64.width != kSpectrumSize || img64.height != kSpectrumSize ||
      img64.channels != 1)
    throw std::invalid_argument("fft2: expected 64x64 single-channel image");
  ComplexSpectrum spec;
  spec.bins.resize(static_cast<std::size_t>(kSpectrumSize) * kSpectrumSize);
  for (int y = 0; y < kSpectrumSize; ++y)
    for (int x = 0; x < kSpectrumSize; ++x)
      spec.at(y, x) = {static_cast<double>(img64.at(x, y, 0)), 0.0};

  for (int row = 0; row < kSpectrumSize; ++row)
    fft64(&spec.bins[static_cast<std::size_t>(row) * kSpectrumSize]);

  std::array<std::complex<double>, kSpectrumSize> col;
  for (int c = 0; c < kSpectrumSize; ++c) {
    for (int r = 0; r < kSpectrumSize; ++r) col[r] = spec.at(r, c);
    fft64(col.data());
    for (int r = 0; r < kSpectrumSize; ++r) spec.at(r, c) = col[r];
  }
  return spec;
}

std::vector<double> amplitude(const ComplexSpectrum& spec) {
  if (spec.bins.size() !=
      static_cast<std::size_t>(kSpectrumSize) * kSpectrumSize)
    throw std::invalid_argument("amplitude: bad spectrum size");
  std::vector<double> amp(spec.bins.size());
  for (std::size_t i = 0; i < spec.bins.size(); ++i)
    amp[i] = std::abs(spec.bins[i]);
  return amp;
}

WindowMode window_mode_from_name(const std::string& name) {
  if (name == "corner") return WindowMode::kCorner;
  if (name == "corners4") return WindowMode::kFourCorners;
  throw std::invalid_argument("unknown window mode: " + name);
}

const char* window_mode_name(WindowMode mode) {
  return mode == WindowMode::kCorner ? "corner" : "corners4";
}

SpectralFeature highfreq_window(const std::vector<double>& amp, int n,
                                bool log_scale, WindowMode mode) {
  if (n < 1 || n > kSpectrumSize / 2)
    throw std::invalid_argument("highfreq_window: n must be in 1..32");
  if (amp.size() != static_cast<std::size_t>(kSpectrumSize) * kSpectrumSize)
    throw std::invalid_argument("highfreq_window: bad amplitude size");
  SpectralFeature f;
  f.n = n;
  f.values.reserve(static_cast<std::size_t>(n) * n);
  const int half = kSpectrumSize / 2;
  auto shifted = [&amp, half](int r, int c) {
    const int u = (r + half) % kSpectrumSize;
    const int v = (c + half) % kSpectrumSize;
    return amp[static_cast<std::size_t>(u) * kSpectrumSize + v];
  };
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      double a;
      if (mode == WindowMode::kCorner) {
        a = shifted(r, c);
      } else {
        // Mirrored corners carry the same information for real inputs;
        // averaging all four mostly smooths float noise but makes the
        // comparison run cheap to ask for.
        a = 0.25 * (shifted(r, c) + shifted(r, kSpectrumSize - 1 - c) +
                    shifted(kSpectrumSize - 1 - r, c) +
                    shifted(kSpectrumSize - 1 - r, kSpectrumSize - 1 - c));
      }
      if (log_scale) a = std::log1p(a);
      f.values.push_back(static_cast<float>(a));
    }
  }
  return f;
}

SpectralFeature extract_feature(const Image& img, int n, bool log_scale,
                                WindowMode mode) {
  const Image img64 = resize_to_64(img);
  return highfreq_window(amplitude(fft2(img64)), n, log_scale, mode);
}

namespace {

constexpr char kFeatMagic[9] = {'F', 'R', 'O', 'S', 'T', 'F', 'E', 'A', 'T'};

}  // namespace

void save_features(const std::string& path,
                   const std::vector<SpectralFeature>& features) {
  if (features.empty())
    throw std::invalid_argument("save_features: nothing to save");
  const int n = features.front().n;
  for (const auto& f : features)
    if (f.n != n || f.values.size() != static_cast<std::size_t>(n) * n)
      throw std::invalid_argument("save_features: inconsistent feature sizes");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kFeatMagic, sizeof kFeatMagic);
  out.put(1);  // version
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(n));
  binio::write_le<std::uint64_t>(out, features.size());
  for (const auto& f : features)
    for (float v : f.values) binio::write_f32(out, v);
  if (!out) throw std::runtime_error("short write: " + path);
}

std::vector<SpectralFeature> load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[sizeof kFeatMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kFeatMagic, sizeof magic) != 0)
    throw std::runtime_error("feature file: bad magic in " + path);
  const int version = in.get();
  if (version != 1)
    throw std::runtime_error("feature file: unsupported version in " + path);
  const auto n = binio::read_le<std::uint32_t>(in);
  const auto count = binio::read_le<std::uint64_t>(in);
  if (n < 1 || n > 32) throw std::runtime_error("feature file: bad n");
  std::vector<SpectralFeature> features(count);
  for (auto& f : features) {
    f.n = static_cast<int>(n);
    f.values.resize(static_cast<std::size_t>(n) * n);
    for (float& v : f.values) v = binio::read_f32(in);
  }
  return features;
}

}  // namespace frost
