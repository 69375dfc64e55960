#pragma once

// Deterministic scalar math for the corruption synthesis path.
//
// libm's exp/sin/cos are not guaranteed to be correctly rounded, so their
// results can differ between platforms. The corruption pipeline promises
// bit-identical output for a fixed seed, so every transcendental it needs
// is evaluated here with plain IEEE-754 adds/multiplies (plus ldexp, which
// is exact). Accuracy is ~1 ulp over the argument ranges we use, which is
// more than enough for synthesizing noise and blur kernels.

namespace frost::detmath {

// exp(x) for x in roughly [-700, 700].
double det_exp(double x);

// sin/cos for |x| <= ~1e6 (we only ever pass angles in [0, 2*pi)).
double det_sin(double x);
double det_cos(double x);

}  // namespace frost::detmath
