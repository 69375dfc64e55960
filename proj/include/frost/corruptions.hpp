#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "frost/config.hpp"
#include "frost/image.hpp"

namespace frost {

// Stable integer codes; these go into files, keep the order fixed.
enum class CorruptionKind : int {
  kContrast = 0,
  kBrightness = 1,
  kDefocusBlur = 2,
  kGlassBlur = 3,
  kMotionBlur = 4,
  kZoomBlur = 5,
  kImpulseNoise = 6,
  kShotNoise = 7,
  kGaussianNoise = 8,
};

constexpr int kCorruptionCount = 9;

constexpr std::array<CorruptionKind, kCorruptionCount> all_corruptions() {
  return {CorruptionKind::kContrast,     CorruptionKind::kBrightness,
          CorruptionKind::kDefocusBlur,  CorruptionKind::kGlassBlur,
          CorruptionKind::kMotionBlur,   CorruptionKind::kZoomBlur,
          CorruptionKind::kImpulseNoise, CorruptionKind::kShotNoise,
          CorruptionKind::kGaussianNoise};
}

const char* corruption_name(CorruptionKind kind);
CorruptionKind corruption_from_name(const std::string& name);
CorruptionKind corruption_from_code(int code);

// Severity 1..5, 5 strongest.
struct SeverityLevel {
  int value;
  explicit SeverityLevel(int v);
};

struct CorruptionParams {
  CorruptionKind kind;
  int severity;
  // Primary strength knob; meaning depends on kind:
  //   contrast factor, brightness offset, defocus radius px, glass sigma,
  //   motion kernel length px, zoom max factor, impulse fraction,
  //   shot photon scale, gaussian sigma.
  double strength = 0.0;
  // Glass blur only.
  int glass_iterations = 0;
  int glass_max_shift_px = 0;
  double glass_swap_prob = 0.0;
};

// Per-kind, per-severity parameter tables. Defaults span mild to severe;
// any entry can be overridden from a config file with keys like
//   corrupt.gaussian_noise.sigma.3 = 0.2
//   corrupt.glass_blur.iters.5 = 6
//   corrupt.glass_blur.swap_prob.5 = 0.1
class CorruptionTable {
 public:
  CorruptionTable();  // defaults
  explicit CorruptionTable(const Config& cfg);

  CorruptionParams params(CorruptionKind kind, SeverityLevel severity) const;

 private:
  std::array<std::array<double, 5>, kCorruptionCount> strength_;
  std::array<int, 5> glass_iters_;
  std::array<int, 5> glass_dist_;
  std::array<double, 5> glass_swap_prob_;
};

// Convenience over the default table.
CorruptionParams corruption_params(CorruptionKind kind, SeverityLevel severity);

// Applies one corruption. Deterministic given (img, kind, severity, seed);
// output has the input's shape with every value clamped to [0,1].
// Rejects images smaller than 8x8.
Image apply_corruption(const Image& img, CorruptionKind kind,
                       SeverityLevel severity, std::uint64_t seed,
                       const CorruptionTable& table = CorruptionTable());

// Corrupts every image; element i uses seed base_seed ^ i. Empty input is an
// error.
std::vector<Image> make_corrupted_set(const std::vector<Image>& images,
                                      CorruptionKind kind,
                                      SeverityLevel severity,
                                      std::uint64_t base_seed,
                                      const CorruptionTable& table =
                                          CorruptionTable());

}  // namespace frost
