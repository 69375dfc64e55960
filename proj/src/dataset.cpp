#include "frost/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "binio.hpp"
#include "frost/rng.hpp"

namespace frost {

namespace {

constexpr int kSize = 64;
constexpr double kTwoPi = 6.283185307179586476925286766559;

const char* kClassNames[kClassCount] = {
    "disk",  "ring",  "square",       "triangle",     "plus",
    "cross", "star",  "hbar_grating", "vbar_grating", "checker_patch"};

double smooth_coverage(double sd) {
  // ~1.3px soft edge keeps shape spectra tame at high frequencies.
  constexpr double kEdge = 1.3;
  const double t = (sd + kEdge * 0.5) / kEdge;
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return t * t * (3.0 - 2.0 * t);
}

struct Pose {
  double cx, cy;     // center
  double radius;     // scale
  double angle;      // rotation
  double bg;         // background level
  double fg;         // foreground delta
};

double sd_box(double qx, double qy, double hx, double hy) {
  return std::min(hx - std::abs(qx), hy - std::abs(qy));
}

// Signed distance of the shape interior (positive inside), in the image
// frame. Gratings/checker return a modulation factor instead via `factor`.
double shape_sd(int label, const Pose& p, double x, double y,
                double grating_period, double grating_phase,
                double* factor) {
  const double dx = x - p.cx;
  const double dy = y - p.cy;
  const double ca = std::cos(p.angle);
  const double sa = std::sin(p.angle);
  const double qx = ca * dx + sa * dy;
  const double qy = -sa * dx + ca * dy;
  const double rho = std::sqrt(dx * dx + dy * dy);
  *factor = 1.0;
  switch (label) {
    case 0:  // disk
      return p.radius - rho;
    case 1:  // ring
      return 0.28 * p.radius - std::abs(rho - 0.72 * p.radius);
    case 2:  // square
      return sd_box(qx, qy, 0.78 * p.radius, 0.78 * p.radius);
    case 3: {  // equilateral triangle
      const double apothem = 0.5 * p.radius;
      double worst = -1e9;
      for (int k = 0; k < 3; ++k) {
        const double a = kTwoPi * k / 3.0 - M_PI / 2.0;
        const double proj = qx * std::cos(a) + qy * std::sin(a);
        worst = std::max(worst, proj);
      }
      return apothem - worst;
    }
    case 4:  // plus
      return std::max(sd_box(qx, qy, 0.95 * p.radius, 0.30 * p.radius),
                      sd_box(qx, qy, 0.30 * p.radius, 0.95 * p.radius));
    case 5: {  // diagonal cross
      const double c45 = std::cos(p.angle + M_PI / 4.0);
      const double s45 = std::sin(p.angle + M_PI / 4.0);
      const double rx = c45 * dx + s45 * dy;
      const double ry = -s45 * dx + c45 * dy;
      return std::max(sd_box(rx, ry, 0.95 * p.radius, 0.30 * p.radius),
                      sd_box(rx, ry, 0.30 * p.radius, 0.95 * p.radius));
    }
    case 6: {  // five-petal star
      const double phi = std::atan2(dy, dx);
      const double target =
          p.radius * (0.55 + 0.45 * std::cos(5.0 * (phi - p.angle)));
      return target - rho;
    }
    case 7:  // horizontal grating inside a disk
      *factor = 0.5 * (1.0 + std::sin(kTwoPi * qy / grating_period +
                                      grating_phase));
      return 1.1 * p.radius - rho;
    case 8:  // vertical grating inside a disk
      *factor = 0.5 * (1.0 + std::sin(kTwoPi * qx / grating_period +
                                      grating_phase));
      return 1.1 * p.radius - rho;
    case 9:  // checker patch inside a square
      *factor = 0.5 * (1.0 + std::sin(kTwoPi * qx / grating_period) *
                                 std::sin(kTwoPi * qy / grating_period +
                                          grating_phase));
      return sd_box(qx, qy, 0.95 * p.radius, 0.95 * p.radius);
  }
  throw std::invalid_argument("render: bad class label");
}

}  // namespace

const char* class_name(int label) {
  if (label < 0 || label >= kClassCount)
    throw std::invalid_argument("class_name: label out of range");
  return kClassNames[label];
}

Image render_shape_image(int label, std::uint64_t seed,
                         const RenderParams& params) {
  if (label < 0 || label >= kClassCount)
    throw std::invalid_argument("render: label out of range");
  Rng rng(seed);
  Pose p;
  p.bg = rng.uniform(params.bg_lo, params.bg_hi);
  p.fg = rng.uniform(params.fg_lo, params.fg_hi);
  p.cx = 31.5 + rng.uniform(-6.0, 6.0);
  p.cy = 31.5 + rng.uniform(-6.0, 6.0);
  p.radius = rng.uniform(14.0, 21.0);
  // Rotation jitter is class-aware: a plus rotated 45 degrees IS a cross,
  // and gratings must keep their axis, so those classes only wobble.
  const bool orientation_bound =
      label == 4 || label == 5 || label == 7 || label == 8;
  p.angle = orientation_bound ? rng.uniform(-0.15, 0.15)
                              : rng.uniform(0.0, kTwoPi);
  const double period = rng.uniform(7.0, 10.0);
  const double phase = rng.uniform(0.0, kTwoPi);

  Image img(kSize, kSize, 3);
  for (int y = 0; y < kSize; ++y) {
    for (int x = 0; x < kSize; ++x) {
      double factor = 1.0;
      const double sd = shape_sd(label, p, x, y, period, phase, &factor);
      const double cov = smooth_coverage(sd);
      double v = p.bg + cov * factor * p.fg;
      v += params.texture_amplitude * rng.uniform(-1.0, 1.0);
      const float fv = static_cast<float>(std::min(1.0, std::max(0.0, v)));
      img.at(x, y, 0) = fv;
      img.at(x, y, 1) = fv;
      img.at(x, y, 2) = fv;
    }
  }
  return img;
}

Image render_shape_image(int label, std::uint64_t seed,
                         double texture_amplitude) {
  RenderParams params;
  params.texture_amplitude = texture_amplitude;
  return render_shape_image(label, seed, params);
}

ShapeDataset generate_split(const std::string& split, int size,
                            std::uint64_t split_seed,
                            const RenderParams& params) {
  if (size <= 0 || size % kClassCount != 0)
    throw std::invalid_argument(
        "generate_split: size must be a positive multiple of 10");
  ShapeDataset ds;
  ds.split = split;
  ds.seed = split_seed;
  ds.images.reserve(size);
  ds.labels.reserve(size);
  for (int i = 0; i < size; ++i) {
    const int label = i % kClassCount;
    ds.images.push_back(render_shape_image(
        label, Rng::derive(split_seed, static_cast<std::uint64_t>(i)),
        params));
    ds.labels.push_back(label);
  }
  return ds;
}

ShapeDataset generate_split(const std::string& split, int size,
                            std::uint64_t split_seed,
                            double texture_amplitude) {
  RenderParams params;
  params.texture_amplitude = texture_amplitude;
  return generate_split(split, size, split_seed, params);
}

DataConfig DataConfig::from_config(const Config& cfg,
                                   std::uint64_t default_seed) {
  DataConfig d;
  d.train_size = cfg.get_int("data.train_size", d.train_size);
  d.val_size = cfg.get_int("data.val_size", d.val_size);
  d.test_size = cfg.get_int("data.test_size", d.test_size);
  d.seed = cfg.get_u64("data.seed", default_seed);
  d.render.bg_lo = cfg.get_double("data.bg_lo", d.render.bg_lo);
  d.render.bg_hi = cfg.get_double("data.bg_hi", d.render.bg_hi);
  d.render.fg_lo = cfg.get_double("data.fg_lo", d.render.fg_lo);
  d.render.fg_hi = cfg.get_double("data.fg_hi", d.render.fg_hi);
  d.render.texture_amplitude =
      cfg.get_double("data.texture_amplitude", d.render.texture_amplitude);
  return d;
}

DatasetBundle generate_dataset(const DataConfig& cfg) {
  DatasetBundle b;
  b.config = cfg;
  b.train = generate_split("train", cfg.train_size, Rng::derive(cfg.seed, 1),
                           cfg.render);
  b.val = generate_split("val", cfg.val_size, Rng::derive(cfg.seed, 2),
                         cfg.render);
  b.test = generate_split("test", cfg.test_size, Rng::derive(cfg.seed, 3),
                          cfg.render);
  return b;
}

namespace {

constexpr char kDataMagic[10] = {'F', 'R', 'O', 'S', 'T', 'D', 'A', 'T', 'A', '1'};

void write_split(std::ostream& out, const ShapeDataset& ds) {
  binio::write_string(out, ds.split);
  binio::write_le<std::uint64_t>(out, ds.seed);
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.images.size()));
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const Image& img = ds.images[i];
    binio::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(img.width));
    binio::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(img.height));
    binio::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(img.channels));
    binio::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(ds.labels[i]));
    binio::write_f32_array(out, img.data.data(), img.data.size());
  }
}

ShapeDataset read_split(std::istream& in) {
  ShapeDataset ds;
  ds.split = binio::read_string(in);
  ds.seed = binio::read_le<std::uint64_t>(in);
  const auto count = binio::read_le<std::uint32_t>(in);
  if (count > (1u << 24)) throw std::runtime_error("dataset: absurd count");
  ds.images.reserve(count);
  ds.labels.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const int w = binio::read_le<std::uint16_t>(in);
    const int h = binio::read_le<std::uint16_t>(in);
    const int c = binio::read_le<std::uint16_t>(in);
    const int label = binio::read_le<std::uint16_t>(in);
    if (w <= 0 || h <= 0 || (c != 1 && c != 3) || label >= kClassCount)
      throw std::runtime_error("dataset: bad image header");
    Image img(w, h, c);
    binio::read_f32_array(in, img.data.data(), img.data.size());
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
  }
  return ds;
}

}  // namespace

void save_dataset(const DatasetBundle& bundle, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kDataMagic, sizeof kDataMagic);
  binio::write_le<std::uint64_t>(out, bundle.config.seed);
  binio::write_f64(out, bundle.config.render.texture_amplitude);
  write_split(out, bundle.train);
  write_split(out, bundle.val);
  write_split(out, bundle.test);
  if (!out) throw std::runtime_error("short write: " + path);
}

DatasetBundle load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[sizeof kDataMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kDataMagic, sizeof magic) != 0)
    throw std::runtime_error("dataset: bad magic in " + path);
  DatasetBundle b;
  b.config.seed = binio::read_le<std::uint64_t>(in);
  b.config.render.texture_amplitude = binio::read_f64(in);
  b.train = read_split(in);
  b.val = read_split(in);
  b.test = read_split(in);
  b.config.train_size = static_cast<int>(b.train.images.size());
  b.config.val_size = static_cast<int>(b.val.images.size());
  b.config.test_size = static_cast<int>(b.test.images.size());
  return b;
}

}  // namespace frost
