#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "frost/corruptions.hpp"
#include "frost/spectral.hpp"

namespace frost {

// Five-way grouping of the nine corruption kinds. Fixed membership:
// Blur = {glass, motion, zoom}; Noise = {impulse, shot, gaussian};
// Defocus, Contrast, Brightness are singletons.
enum class MacroCorruption : int {
  kContrast = 0,
  kBrightness = 1,
  kDefocus = 2,
  kBlur = 3,
  kNoise = 4,
};

constexpr int kMacroCount = 5;

const char* macro_name(MacroCorruption macro);
MacroCorruption macro_from_name(const std::string& name);
MacroCorruption macro_of(CorruptionKind kind);
std::vector<CorruptionKind> macro_members(MacroCorruption macro);

// Streaming mean with the classic incremental update; accumulates in double
// so batch and streaming results agree to ~1e-5 relative.
class RunningMean {
 public:
  RunningMean() = default;
  explicit RunningMean(int dim) : mean_(dim, 0.0) {}

  void update(const SpectralFeature& f);
  // Pairwise merge so parallel partial means reduce to the serial result.
  void merge(const RunningMean& other);

  std::uint64_t count() const { return count_; }
  SpectralFeature snapshot(int n) const;

 private:
  std::vector<double> mean_;
  std::uint64_t count_ = 0;
};

struct PrototypeBank {
  int n = 0;
  std::array<SpectralFeature, kCorruptionCount> fine;
  std::array<std::uint64_t, kCorruptionCount> counts{};
  std::array<SpectralFeature, kMacroCount> macro;
  bool has_macro = false;
};

// Mean feature per kind over the dataset corrupted at the given severity
// (the strongest level by default). Image i of kind k is corrupted with
// seed derive(seed, k) ^ i, matching make_corrupted_set's layout.
PrototypeBank build_prototypes(const std::vector<Image>& dataset, int n,
                               SeverityLevel severity, std::uint64_t seed,
                               const CorruptionTable& table = CorruptionTable(),
                               bool log_scale = true);

// Count-weighted mean of member fine prototypes into bank.macro.
void macro_group(PrototypeBank& bank);

// Verifies the macro consistency invariant (weighted means, shared n).
void validate_bank(const PrototypeBank& bank);

void save_bank(const PrototypeBank& bank, const std::string& path);
PrototypeBank load_bank(const std::string& path);

struct LabelAssignment {
  std::vector<int> labels;
};

struct KMeansResult {
  LabelAssignment assignment;
  std::vector<std::vector<double>> centers;
  double inertia = 0.0;
  int iterations = 0;
};

// Lloyd's algorithm, k-means++ seeding, best of `restarts` runs by inertia.
// Deterministic for a fixed seed. Empty clusters are refilled with the
// farthest point of the largest cluster.
KMeansResult kmeans(const std::vector<SpectralFeature>& features, int k,
                    std::uint64_t seed, int max_iters = 300, int restarts = 5);

// Hubert-Arabie adjusted Rand index in [-1, 1].
double adjusted_rand_index(const LabelAssignment& a, const LabelAssignment& b);

}  // namespace frost
