#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace frost {

// Row-major interleaved intensity image, values in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c) : width(w), height(h), channels(c) {
    data.assign(static_cast<std::size_t>(w) * h * c, 0.0f);
  }

  static Image constant(int w, int h, int c, float value);

  float& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }

  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

// Throws std::invalid_argument when shape/data are inconsistent or any
// value is non-finite or outside [0,1].
void validate_image(const Image& img);

// Luma conversion (0.299 R + 0.587 G + 0.114 B). Single-channel input is
// returned unchanged.
Image to_grayscale(const Image& img);

// Bilinear resize with half-pixel centers; each channel independently.
Image resize_bilinear(const Image& img, int out_w, int out_h);

// Mirror index into [0, n) (reflect-101, folded until in range).
int reflect_index(int i, int n);

// FNV-1a over the raw float bytes; used for split-disjointness checks.
std::uint64_t image_hash(const Image& img);

// 8-bit PPM (3ch) / PGM (1ch) round-trip for the CLI. Values are quantized
// to 255 levels on save.
Image load_pnm(const std::string& path);
void save_pnm(const Image& img, const std::string& path);

}  // namespace frost
