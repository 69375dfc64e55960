#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "frost/detmath.hpp"
#include "frost/rng.hpp"

using frost::Rng;
namespace detmath = frost::detmath;

TEST_CASE("rng streams are deterministic and seed-sensitive") {
  Rng a(123), b(123), c(124);
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
  }
  bool differs = false;
  Rng a2(123);
  for (int i = 0; i < 100; ++i)
    if (a2.next_u64() != c.next_u64()) differs = true;
  CHECK(differs);
}

TEST_CASE("uniform stays in [0,1) with a sane mean") {
  Rng rng(7);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("index is bounded and covers all residues") {
  Rng rng(9);
  std::vector<int> hits(10, 0);
  for (int i = 0; i < 10000; ++i) {
    const auto v = rng.index(10);
    REQUIRE(v < 10);
    ++hits[static_cast<int>(v)];
  }
  for (int h : hits) CHECK(h > 700);
}

TEST_CASE("normal has zero mean, unit variance, bounded support") {
  Rng rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    REQUIRE(std::abs(x) <= 6.0);
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("poisson matches its mean and variance") {
  Rng rng(13);
  for (double lambda : {0.5, 3.0, 12.0, 60.0}) {
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const double k = static_cast<double>(rng.poisson(lambda));
      sum += k;
      sq += k * k;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(mean == doctest::Approx(lambda).epsilon(0.05));
    CHECK(var == doctest::Approx(lambda).epsilon(0.10));
  }
  CHECK(rng.poisson(0.0) == 0);
}

TEST_CASE("fork gives independent reproducible child streams") {
  Rng parent(5);
  Rng c1 = parent.fork(1);
  Rng c2 = parent.fork(2);
  Rng c1_again = Rng(5).fork(1);
  CHECK(c1.next_u64() == c1_again.next_u64());
  CHECK(c1.next_u64() != c2.next_u64());
}

TEST_CASE("det_exp matches libm to high accuracy") {
  for (double x : {-60.0, -12.5, -1.0, -0.01, 0.0, 0.3, 1.0, 5.5, 50.0}) {
    const double got = detmath::det_exp(x);
    const double want = std::exp(x);
    CHECK(got == doctest::Approx(want).epsilon(1e-14));
  }
  CHECK(detmath::det_exp(-800.0) == 0.0);
}

TEST_CASE("det_sin/det_cos match libm over the angle range we use") {
  for (int i = 0; i <= 1000; ++i) {
    const double x = 6.283185307179586 * i / 1000.0;
    CHECK(std::abs(detmath::det_sin(x) - std::sin(x)) < 1e-12);
    CHECK(std::abs(detmath::det_cos(x) - std::cos(x)) < 1e-12);
    const double s = detmath::det_sin(x), c = detmath::det_cos(x);
    CHECK(s * s + c * c == doctest::Approx(1.0).epsilon(1e-12));
  }
}
