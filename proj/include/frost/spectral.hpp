#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "frost/image.hpp"

namespace frost {

constexpr int kSpectrumSize = 64;

// Unnormalized 2-D DFT of a 64x64 single-channel image, row-major.
struct ComplexSpectrum {
  std::vector<std::complex<double>> bins;  // kSpectrumSize^2

  std::complex<double>& at(int u, int v) {
    return bins[static_cast<std::size_t>(u) * kSpectrumSize + v];
  }
  std::complex<double> at(int u, int v) const {
    return bins[static_cast<std::size_t>(u) * kSpectrumSize + v];
  }
};

// Flattened n x n high-frequency amplitude window, log-compressed.
struct SpectralFeature {
  int n = 0;
  std::vector<float> values;  // length n*n

  double l2_norm() const;
};

// l2 distance between two features of equal n.
double feature_distance(const SpectralFeature& a, const SpectralFeature& b);

// Grayscale + bilinear resample to 64x64. Output is single channel in [0,1].
// A 64x64 single-channel input passes through bit-identical.
Image resize_to_64(const Image& img);

// Radix-2 Cooley-Tukey, rows then columns, forward sign, unnormalized.
ComplexSpectrum fft2(const Image& img64);

// Elementwise modulus, 64x64 row-major.
std::vector<double> amplitude(const ComplexSpectrum& spec);

// Which high-frequency block the window keeps. kCorner is the default
// (single block at the most-negative-frequency corner of the centered
// spectrum); kFourCorners averages the four corner blocks, kept around for
// comparison runs.
enum class WindowMode { kCorner, kFourCorners };

WindowMode window_mode_from_name(const std::string& name);
const char* window_mode_name(WindowMode mode);

// Center the spectrum (zero frequency at (32,32)) and take the n x n block
// at the most-negative-frequency corner (shifted rows/cols 0..n-1),
// flattened row-major. log_scale applies log(1+a) per element.
SpectralFeature highfreq_window(const std::vector<double>& amp, int n,
                                bool log_scale = true,
                                WindowMode mode = WindowMode::kCorner);

// resize_to_64 -> fft2 -> amplitude -> highfreq_window.
SpectralFeature extract_feature(const Image& img, int n = 15,
                                bool log_scale = true,
                                WindowMode mode = WindowMode::kCorner);

// Feature dump: magic "FROSTFEAT", u8 version, u32 n, u64 count, then
// count * n^2 little-endian float32 values.
void save_features(const std::string& path,
                   const std::vector<SpectralFeature>& features);
std::vector<SpectralFeature> load_features(const std::string& path);

}  // namespace frost
