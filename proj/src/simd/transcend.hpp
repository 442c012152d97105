#pragma once

// Log and turn-based sine/cosine used by the normal generator. The AVX2
// kernel mirrors these operation for operation, so both kernel sets return
// identical bits. Accuracy is a few ulp, which is all sampling needs.

#include <bit>
#include <cmath>
#include <cstdint>

namespace mmv::simd::detail {

inline constexpr double kLn2Hi = 0x1.62e42fefa3800p-1;
inline constexpr double kLn2Lo = 0x1.ef35793c76730p-45;
inline constexpr double kSqrt2 = 0x1.6a09e667f3bcdp+0;
inline constexpr double kTwoPi = 0x1.921fb54442d18p+2;
inline constexpr double kTwo52 = 0x1.0p52;

// 1/(2k+1), k = 10 .. 1
inline constexpr double kAtanh[10] = {1.0 / 21, 1.0 / 19, 1.0 / 17, 1.0 / 15, 1.0 / 13,
                                      1.0 / 11, 1.0 / 9,  1.0 / 7,  1.0 / 5,  1.0 / 3};
// (-1)^k / (2k+1)!, k = 8 .. 1
inline constexpr double kSin[8] = {1.0 / 355687428096000.0, -1.0 / 1307674368000.0,
                                   1.0 / 6227020800.0,      -1.0 / 39916800.0,
                                   1.0 / 362880.0,          -1.0 / 5040.0,
                                   1.0 / 120.0,             -1.0 / 6.0};
// (-1)^k / (2k)!, k = 9 .. 2
inline constexpr double kCos[8] = {-1.0 / 6402373705728000.0, 1.0 / 20922789888000.0,
                                   -1.0 / 87178291200.0,      1.0 / 479001600.0,
                                   -1.0 / 3628800.0,          1.0 / 40320.0,
                                   -1.0 / 720.0,              1.0 / 24.0};

// Natural log for normal positive finite v.
inline double det_log(double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  double e = std::bit_cast<double>((bits >> 52) | 0x4330000000000000ULL) - (kTwo52 + 1023.0);
  double m = std::bit_cast<double>((bits & 0x000FFFFFFFFFFFFFULL) | 0x3FF0000000000000ULL);
  if (m > kSqrt2) {
    m = m * 0.5;
    e = e + 1.0;
  }
  const double s = (m - 1.0) / (m + 1.0);
  const double s2 = s * s;
  double p = kAtanh[0];
  for (int i = 1; i < 10; ++i) p = p * s2 + kAtanh[i];
  const double two_s = s + s;
  const double lm = two_s + two_s * (s2 * p);
  return e * kLn2Hi + (e * kLn2Lo + lm);
}

// cos and sin of 2 pi u for u in [0, 1).
inline void det_sincos_turns(double u, double& c_out, double& s_out) {
  const double q = std::floor(u * 4.0 + 0.5);
  const double f = u - q * 0.25;
  const double a = f * kTwoPi;
  const double a2 = a * a;
  double ps = kSin[0];
  for (int i = 1; i < 8; ++i) ps = ps * a2 + kSin[i];
  double pc = kCos[0];
  for (int i = 1; i < 8; ++i) pc = pc * a2 + kCos[i];
  const double sn = a + (a * a2) * ps;
  const double cs = (1.0 - 0.5 * a2) + (a2 * a2) * pc;
  switch (static_cast<int>(q) & 3) {
    case 0:
      c_out = cs;
      s_out = sn;
      break;
    case 1:
      c_out = -sn;
      s_out = cs;
      break;
    case 2:
      c_out = -cs;
      s_out = -sn;
      break;
    default:
      c_out = sn;
      s_out = -cs;
      break;
  }
}

}  // namespace mmv::simd::detail
