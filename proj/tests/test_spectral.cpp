#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <vector>

#include "frost/corruptions.hpp"
#include "frost/rng.hpp"
#include "frost/spectral.hpp"

using namespace frost;

namespace {

// Brute-force O(N^4) DFT oracle, independent of the fft2 code path.
std::vector<std::complex<double>> naive_dft(const Image& img) {
  const int n = kSpectrumSize;
  std::vector<std::complex<double>> out(static_cast<std::size_t>(n) * n);
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v) {
      std::complex<double> acc(0.0, 0.0);
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          const double ang = -2.0 * M_PI * (static_cast<double>(u) * y +
                                            static_cast<double>(v) * x) / n;
          acc += static_cast<double>(img.at(x, y, 0)) *
                 std::complex<double>(std::cos(ang), std::sin(ang));
        }
      out[static_cast<std::size_t>(u) * n + v] = acc;
    }
  return out;
}

Image random_image64(std::uint64_t seed) {
  Rng rng(seed);
  Image img(64, 64, 1);
  for (float& v : img.data) v = static_cast<float>(rng.uniform());
  return img;
}

// Values on a 1/256 grid so that adding 0.25 stays exactly representable.
Image gridded_image64(std::uint64_t seed, float max_value) {
  Rng rng(seed);
  Image img(64, 64, 1);
  for (float& v : img.data) {
    const int q = static_cast<int>(rng.index(
        static_cast<std::uint64_t>(max_value * 256.0f) + 1));
    v = static_cast<float>(q) / 256.0f;
  }
  return img;
}

}  // namespace

TEST_CASE("fft2 of a constant image is a pure DC spike") {
  const Image ones = Image::constant(64, 64, 1, 1.0f);
  const ComplexSpectrum spec = fft2(ones);
  CHECK(std::abs(spec.at(0, 0) - std::complex<double>(4096.0, 0.0)) < 1e-9);
  for (int u = 0; u < 64; ++u)
    for (int v = 0; v < 64; ++v) {
      if (u == 0 && v == 0) continue;
      CHECK(std::abs(spec.at(u, v)) < 1e-9);
    }
}

TEST_CASE("fft2 of a unit impulse is flat") {
  Image impulse(64, 64, 1);
  impulse.at(0, 0, 0) = 1.0f;
  const ComplexSpectrum spec = fft2(impulse);
  for (const auto& bin : spec.bins)
    CHECK(std::abs(bin - std::complex<double>(1.0, 0.0)) < 1e-12);
}

TEST_CASE("fft2 matches the naive DFT oracle on random inputs") {
  for (int trial = 0; trial < 10; ++trial) {
    const Image img = random_image64(100 + trial);
    const ComplexSpectrum spec = fft2(img);
    const auto want = naive_dft(img);
    double max_err = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i)
      max_err = std::max(max_err, std::abs(spec.bins[i] - want[i]));
    CHECK(max_err < 1e-6);
  }
}

TEST_CASE("Parseval holds to near machine precision") {
  for (int trial = 0; trial < 5; ++trial) {
    const Image img = random_image64(200 + trial);
    const ComplexSpectrum spec = fft2(img);
    double space = 0.0;
    for (float v : img.data) space += static_cast<double>(v) * v;
    double freq = 0.0;
    for (const auto& bin : spec.bins) freq += std::norm(bin);
    CHECK(std::abs(freq - 4096.0 * space) <= 1e-9 * 4096.0 * space);
  }
}

TEST_CASE("amplitude of a real image has Hermitian symmetry") {
  const Image img = random_image64(7);
  const auto amp = amplitude(fft2(img));
  for (int u = 0; u < 64; ++u)
    for (int v = 0; v < 64; ++v) {
      const double a = amp[static_cast<std::size_t>(u) * 64 + v];
      const double b =
          amp[static_cast<std::size_t>((64 - u) % 64) * 64 + (64 - v) % 64];
      CHECK(a == doctest::Approx(b).epsilon(1e-9));
    }
}

TEST_CASE("amplitude basics") {
  ComplexSpectrum zero;
  zero.bins.assign(4096, {0.0, 0.0});
  for (double a : amplitude(zero)) CHECK(a == 0.0);
  ComplexSpectrum dc = zero;
  dc.at(0, 0) = {4096.0, 0.0};
  const auto amp = amplitude(dc);
  CHECK(amp[0] == 4096.0);
  for (std::size_t i = 1; i < amp.size(); ++i) CHECK(amp[i] == 0.0);
}

TEST_CASE("highfreq_window ignores DC and has the right length") {
  ComplexSpectrum dc;
  dc.bins.assign(4096, {0.0, 0.0});
  dc.at(0, 0) = {4096.0, 0.0};
  for (int n : {1, 8, 15, 32}) {
    const SpectralFeature f = highfreq_window(amplitude(dc), n);
    CHECK(f.values.size() == static_cast<std::size_t>(n) * n);
    for (float v : f.values) CHECK(v == 0.0f);
  }
  CHECK(highfreq_window(amplitude(dc), 15).values.size() == 225);
  CHECK_THROWS_AS(highfreq_window(amplitude(dc), 0), std::invalid_argument);
  CHECK_THROWS_AS(highfreq_window(amplitude(dc), 33), std::invalid_argument);
}

TEST_CASE("checkerboard peaks at the Nyquist corner of the window") {
  Image checker(64, 64, 1);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      checker.at(x, y, 0) = static_cast<float>((x + y) & 1);
  // Cross-check the expectation with the naive DFT: all energy should sit
  // at DC and at (32,32).
  const auto want = naive_dft(checker);
  for (int u = 0; u < 64; ++u)
    for (int v = 0; v < 64; ++v) {
      const double a = std::abs(want[static_cast<std::size_t>(u) * 64 + v]);
      if ((u == 0 && v == 0) || (u == 32 && v == 32))
        CHECK(a == doctest::Approx(2048.0).epsilon(1e-9));
      else
        CHECK(a < 1e-6);
    }
  const SpectralFeature f = extract_feature(checker, 15);
  // Shifted row/col 0 maps to frequency (-32,-32) == (32,32).
  std::size_t argmax = 0;
  for (std::size_t i = 1; i < f.values.size(); ++i)
    if (f.values[i] > f.values[argmax]) argmax = i;
  CHECK(argmax == 0);
  CHECK(f.values[0] == doctest::Approx(std::log1p(2048.0)).epsilon(1e-6));
}

TEST_CASE("resize_to_64 shape contract") {
  const Image already = random_image64(3);
  const Image same = resize_to_64(already);
  CHECK(same.data == already.data);  // bit-identical passthrough

  const Image big = Image::constant(128, 128, 3, 0.37f);
  const Image small = resize_to_64(big);
  CHECK(small.width == 64);
  CHECK(small.height == 64);
  CHECK(small.channels == 1);
  for (float v : small.data) CHECK(v == doctest::Approx(0.37f).epsilon(1e-6));

  const Image odd = Image::constant(32, 48, 1, 0.2f);
  const Image out = resize_to_64(odd);
  CHECK(out.width == 64);
  CHECK(out.height == 64);
}

TEST_CASE("extract_feature is deterministic and kills constants") {
  const Image flat = Image::constant(64, 64, 1, 0.42f);
  for (float v : extract_feature(flat, 15).values) CHECK(v == 0.0f);

  const Image img = random_image64(17);
  const SpectralFeature a = extract_feature(img, 15);
  const SpectralFeature b = extract_feature(img, 15);
  CHECK(a.values == b.values);
}

TEST_CASE("feature is exactly invariant to non-clamping constant offsets") {
  // Exactly-representable inputs: 1/256 grid plus a power-of-two offset.
  const Image img = gridded_image64(21, 0.5f);
  Image shifted = img;
  for (float& v : shifted.data) v += 0.25f;
  const SpectralFeature a = extract_feature(img, 15);
  const SpectralFeature b = extract_feature(shifted, 15);
  CHECK(a.values == b.values);
}

TEST_CASE("noise features outran blur features in l2 norm") {
  // High-frequency energy: noise injects it, blur removes it.
  Rng rng(99);
  int wins = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    Image base(64, 64, 1);
    for (float& v : base.data)
      v = static_cast<float>(0.3 + 0.4 * rng.uniform());
    const Image noisy = apply_corruption(base, CorruptionKind::kGaussianNoise,
                                         SeverityLevel(5), 1000 + t);
    const Image blurred = apply_corruption(base, CorruptionKind::kDefocusBlur,
                                           SeverityLevel(5), 2000 + t);
    if (extract_feature(noisy, 15).l2_norm() >
        extract_feature(blurred, 15).l2_norm())
      ++wins;
  }
  CHECK(wins == trials);
}

TEST_CASE("feature files round-trip") {
  std::vector<SpectralFeature> features;
  Rng rng(5);
  for (int i = 0; i < 7; ++i) {
    SpectralFeature f;
    f.n = 15;
    for (int j = 0; j < 225; ++j)
      f.values.push_back(static_cast<float>(rng.uniform()));
    features.push_back(std::move(f));
  }
  const std::string path = "test_features.feat";
  save_features(path, features);
  const auto loaded = load_features(path);
  REQUIRE(loaded.size() == features.size());
  for (std::size_t i = 0; i < loaded.size(); ++i)
    CHECK(loaded[i].values == features[i].values);
  std::remove(path.c_str());
}
