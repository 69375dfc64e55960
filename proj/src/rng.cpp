#include "frost/rng.hpp"

#include "frost/detmath.hpp"

namespace frost {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
}

std::uint64_t Rng::mix(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  return mix(seed + kGolden * (stream + 1));
}

std::uint64_t Rng::next_u64() {
  counter_ += kGolden;
  return mix(seed_ + counter_);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

std::uint64_t Rng::index(std::uint64_t n) {
  // Multiply-high mapping; bias is < 2^-64 per draw.
  const unsigned __int128 wide =
      static_cast<unsigned __int128>(next_u64()) * n;
  return static_cast<std::uint64_t>(wide >> 64);
}

double Rng::normal() {
  double s = 0.0;
  for (int i = 0; i < 12; ++i) s += uniform();
  return s - 6.0;
}

std::uint64_t Rng::poisson(double lambda) {
  if (lambda <= 0.0) return 0;
  const double limit = detmath::det_exp(-lambda);
  std::uint64_t k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= uniform();
  } while (p > limit);
  return k - 1;
}

Rng Rng::fork(std::uint64_t stream) const {
  return Rng(derive(seed_, stream));
}

}  // namespace frost
