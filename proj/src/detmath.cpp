#include "frost/detmath.hpp"

#include <cmath>
#include <cstdint>

namespace frost::detmath {

namespace {

// ln(2) split into a coarse head and a tail so that x - k*LN2 stays exact.
constexpr double kLn2Hi = 6.93147180369123816490e-01;
constexpr double kLn2Lo = 1.90821492927058770002e-10;
constexpr double kInvLn2 = 1.44269504088896338700e+00;

// pi/2 split the same way for trig argument reduction.
constexpr double kPio2Hi = 1.57079632673412561417e+00;
constexpr double kPio2Lo = 6.07710050650619224932e-11;
constexpr double kTwoOverPi = 6.36619772367581382433e-01;

double poly_exp(double r) {
  // Taylor series around 0; |r| <= ln(2)/2 so it converges in ~15 terms.
  double term = 1.0;
  double sum = 1.0;
  for (int i = 1; i < 20; ++i) {
    term = term * r / static_cast<double>(i);
    sum += term;
    if (term < 1e-20 && term > -1e-20) break;
  }
  return sum;
}

double poly_sin(double r) {
  const double r2 = r * r;
  double term = r;
  double sum = r;
  for (int i = 1; i < 12; ++i) {
    term = -term * r2 / static_cast<double>((2 * i) * (2 * i + 1));
    sum += term;
  }
  return sum;
}

double poly_cos(double r) {
  const double r2 = r * r;
  double term = 1.0;
  double sum = 1.0;
  for (int i = 1; i < 12; ++i) {
    term = -term * r2 / static_cast<double>((2 * i - 1) * (2 * i));
    sum += term;
  }
  return sum;
}

}  // namespace

double det_exp(double x) {
  if (x != x) return x;
  if (x > 709.0) return HUGE_VAL;
  if (x < -745.0) return 0.0;
  // x = k*ln2 + r with |r| <= ln2/2.
  const double kd = static_cast<double>(static_cast<long long>(
      x * kInvLn2 + (x >= 0 ? 0.5 : -0.5)));
  const double r = (x - kd * kLn2Hi) - kd * kLn2Lo;
  return std::ldexp(poly_exp(r), static_cast<int>(kd));
}

namespace {

// Reduce x to r in [-pi/4, pi/4] with quadrant index; x is assumed to be
// of moderate magnitude (no Payne-Hanek needed for our angle inputs).
int trig_reduce(double x, double* r) {
  const double kd = static_cast<double>(static_cast<long long>(
      x * kTwoOverPi + (x >= 0 ? 0.5 : -0.5)));
  *r = (x - kd * kPio2Hi) - kd * kPio2Lo;
  return static_cast<int>(static_cast<long long>(kd) & 3LL);
}

}  // namespace

double det_sin(double x) {
  double r = 0.0;
  switch (trig_reduce(x, &r)) {
    case 0: return poly_sin(r);
    case 1: return poly_cos(r);
    case 2: return -poly_sin(r);
    default: return -poly_cos(r);
  }
}

double det_cos(double x) {
  double r = 0.0;
  switch (trig_reduce(x, &r)) {
    case 0: return poly_cos(r);
    case 1: return -poly_sin(r);
    case 2: return -poly_cos(r);
    default: return poly_sin(r);
  }
}

}  // namespace frost::detmath
