#include "frost/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace frost {

Image Image::constant(int w, int h, int c, float value) {
  Image img(w, h, c);
  std::fill(img.data.begin(), img.data.end(), value);
  return img;
}

void validate_image(const Image& img) {
  if (img.width <= 0 || img.height <= 0)
    throw std::invalid_argument("image: non-positive dimensions");
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("image: channels must be 1 or 3");
  const std::size_t expect =
      static_cast<std::size_t>(img.width) * img.height * img.channels;
  if (img.data.size() != expect)
    throw std::invalid_argument("image: data length mismatch");
  for (float v : img.data) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
      throw std::invalid_argument("image: value outside [0,1]");
  }
}

Image to_grayscale(const Image& img) {
  if (img.channels == 1) return img;
  Image out(img.width, img.height, 1);
  const float* src = img.data.data();
  float* dst = out.data.data();
  const std::size_t n = img.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    const float* p = src + i * 3;
    dst[i] = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
  }
  return out;
}

Image resize_bilinear(const Image& img, int out_w, int out_h) {
  if (img.width == out_w && img.height == out_h) return img;
  Image out(out_w, out_h, img.channels);
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::min(std::max(fy, 0.0), static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::min(std::max(fx, 0.0), static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = (1.0 - wx) * img.at(x0, y0, c) + wx * img.at(x1, y0, c);
        const double bot = (1.0 - wx) * img.at(x0, y1, c) + wx * img.at(x1, y1, c);
        out.at(x, y, c) = static_cast<float>((1.0 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = i % period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

std::uint64_t image_hash(const Image& img) {
  std::uint64_t h = 1469598103934665603ull;
  auto feed = [&h](const void* p, std::size_t len) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  feed(&img.width, sizeof img.width);
  feed(&img.height, sizeof img.height);
  feed(&img.channels, sizeof img.channels);
  feed(img.data.data(), img.data.size() * sizeof(float));
  return h;
}

Image load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image: " + path);
  std::string magic;
  in >> magic;
  int channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw std::runtime_error("unsupported PNM magic in " + path);

  auto next_token = [&in, &path]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
    throw std::runtime_error("truncated PNM header: " + path);
  };
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("unsupported PNM geometry in " + path);
  in.get();  // single whitespace after maxval

  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw std::runtime_error("truncated PNM payload: " + path);

  Image img(w, h, channels);
  for (std::size_t i = 0; i < raw.size(); ++i)
    img.data[i] = static_cast<float>(raw[i]) / 255.0f;
  return img;
}

void save_pnm(const Image& img, const std::string& path) {
  validate_image(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image: " + path);
  out << (img.channels == 1 ? "P5" : "P6") << "\n"
      << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> raw(img.data.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const float v = img.data[i] * 255.0f + 0.5f;
    raw[i] = static_cast<unsigned char>(std::min(255.0f, std::max(0.0f, v)));
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw std::runtime_error("short write: " + path);
}

}  // namespace frost
