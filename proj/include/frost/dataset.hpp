#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "frost/config.hpp"
#include "frost/image.hpp"

namespace frost {

constexpr int kClassCount = 10;

const char* class_name(int label);

// One split of procedurally rendered 64x64x3 shape images. Classes are
// exactly balanced (size must be a multiple of 10) and rendering is fully
// determined by the split seed.
struct ShapeDataset {
  std::vector<Image> images;
  std::vector<int> labels;
  std::string split;
  std::uint64_t seed = 0;
};

// Intensity layout of a rendered image. The defaults keep headroom for
// the brightness corruption (base + shape + texture stays below ~0.7) and
// a narrow background band so renormalized low-contrast images are not
// dominated by per-image level jitter.
struct RenderParams {
  double bg_lo = 0.20;
  double bg_hi = 0.30;
  double fg_lo = 0.22;
  double fg_hi = 0.34;
  // Fine full-band texture layered over every image; this is what the
  // spectral fingerprint of a *clean* image looks like.
  double texture_amplitude = 0.12;
};

struct DataConfig {
  int train_size = 1500;
  int val_size = 200;
  int test_size = 500;
  std::uint64_t seed = 1;
  RenderParams render;

  static DataConfig from_config(const Config& cfg, std::uint64_t default_seed);
};

struct DatasetBundle {
  ShapeDataset train, val, test;
  DataConfig config;
};

// Renders one image; exposed for tests and the CLI.
Image render_shape_image(int label, std::uint64_t seed,
                         const RenderParams& params);
Image render_shape_image(int label, std::uint64_t seed,
                         double texture_amplitude);

ShapeDataset generate_split(const std::string& split, int size,
                            std::uint64_t split_seed,
                            const RenderParams& params);
ShapeDataset generate_split(const std::string& split, int size,
                            std::uint64_t split_seed,
                            double texture_amplitude);

// Splits use disjoint seed streams derived from cfg.seed.
DatasetBundle generate_dataset(const DataConfig& cfg);

// Dataset file: magic "FROSTDATA1"; stores all three splits losslessly.
void save_dataset(const DatasetBundle& bundle, const std::string& path);
DatasetBundle load_dataset(const std::string& path);

}  // namespace frost
