#include "mmv/simd/kernels.hpp"
#include "philox_round.hpp"
#include "transcend.hpp"

#include <cmath>

namespace mmv::simd {
namespace {

void philox_blocks_scalar(PhiloxKey key, std::uint32_t first, std::uint32_t c1,
                          std::uint32_t c2, std::uint32_t c3, std::size_t count,
                          std::uint32_t* out) {
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t c[4] = {first + static_cast<std::uint32_t>(i), c1, c2, c3};
    detail::philox4x32_10(c, key.k0, key.k1);
    out[4 * i + 0] = c[0];
    out[4 * i + 1] = c[1];
    out[4 * i + 2] = c[2];
    out[4 * i + 3] = c[3];
  }
}

void euler_update_scalar(double* x, const double* drift, const double* noise,
                         double h, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double hd = h * drift[i];
    x[i] = (x[i] + hd) + noise[i];
  }
}

Sums3 weighted_sums_scalar(const double* v, const double* w, std::size_t n) {
  double s0[4] = {0, 0, 0, 0};
  double s1[4] = {0, 0, 0, 0};
  double s2[4] = {0, 0, 0, 0};
  const std::size_t body = n & ~std::size_t{3};
  for (std::size_t i = 0; i < body; i += 4) {
    for (std::size_t l = 0; l < 4; ++l) {
      const double wi = w ? w[i + l] : 1.0;
      const double wv = wi * v[i + l];
      s0[l] += wi;
      s1[l] += wv;
      s2[l] += wv * v[i + l];
    }
  }
  Sums3 r;
  r.weight = (s0[0] + s0[1]) + (s0[2] + s0[3]);
  r.first = (s1[0] + s1[1]) + (s1[2] + s1[3]);
  r.second = (s2[0] + s2[1]) + (s2[2] + s2[3]);
  for (std::size_t i = body; i < n; ++i) {
    const double wi = w ? w[i] : 1.0;
    const double wv = wi * v[i];
    r.weight += wi;
    r.first += wv;
    r.second += wv * v[i];
  }
  return r;
}

double weighted_sq_diff_scalar(const double* a, const double* b,
                               const double* w, std::size_t n) {
  double s[4] = {0, 0, 0, 0};
  const std::size_t body = n & ~std::size_t{3};
  for (std::size_t i = 0; i < body; i += 4) {
    for (std::size_t l = 0; l < 4; ++l) {
      const double d = a[i + l] - b[i + l];
      const double wd = (w ? w[i + l] : 1.0) * d;
      s[l] += wd * d;
    }
  }
  double r = (s[0] + s[1]) + (s[2] + s[3]);
  for (std::size_t i = body; i < n; ++i) {
    const double d = a[i] - b[i];
    const double wd = (w ? w[i] : 1.0) * d;
    r += wd * d;
  }
  return r;
}

void accumulate_scalar(double* acc, const double* v, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += v[i];
}

double unit53(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return static_cast<double>(bits) * 0x1.0p-53;
}

void box_muller_scalar(const std::uint32_t* words, std::size_t count, double* z0,
                       double* z1) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t* w = words + 4 * i;
    const double u1 = unit53(w[0], w[1]);
    const double u2 = unit53(w[2], w[3]);
    const double r = std::sqrt(-2.0 * detail::det_log(1.0 - u1));
    double c, s;
    detail::det_sincos_turns(u2, c, s);
    z0[i] = r * c;
    if (z1) z1[i] = r * s;
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Isa::scalar,          philox_blocks_scalar,
                                 euler_update_scalar,  weighted_sums_scalar,
                                 weighted_sq_diff_scalar, accumulate_scalar,
                                 box_muller_scalar};
  return table;
}

}  // namespace mmv::simd
