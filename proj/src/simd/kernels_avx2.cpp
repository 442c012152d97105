#include "mmv/simd/kernels.hpp"
#include "philox_round.hpp"
#include "transcend.hpp"

#include <cmath>

#include <immintrin.h>

namespace mmv::simd {
namespace {

void philox_blocks_avx2(PhiloxKey key, std::uint32_t first, std::uint32_t c1,
                        std::uint32_t c2, std::uint32_t c3, std::size_t count,
                        std::uint32_t* out) {
  // Each 64-bit lane carries one 32-bit word in its low half.
  const __m256i lo32 = _mm256_set1_epi64x(0xFFFFFFFFLL);
  const __m256i m0 = _mm256_set1_epi64x(detail::kPhiloxM0);
  const __m256i m1 = _mm256_set1_epi64x(detail::kPhiloxM1);
  const __m256i w0 = _mm256_set1_epi64x(detail::kPhiloxW0);
  const __m256i w1 = _mm256_set1_epi64x(detail::kPhiloxW1);
  const std::size_t body = count & ~std::size_t{3};
  alignas(32) std::uint64_t r[4][4];
  for (std::size_t i = 0; i < body; i += 4) {
    const std::uint32_t base = first + static_cast<std::uint32_t>(i);
    __m256i x0 = _mm256_set_epi64x(std::uint32_t(base + 3), std::uint32_t(base + 2),
                                   std::uint32_t(base + 1), base);
    __m256i x1 = _mm256_set1_epi64x(c1);
    __m256i x2 = _mm256_set1_epi64x(c2);
    __m256i x3 = _mm256_set1_epi64x(c3);
    __m256i k0 = _mm256_set1_epi64x(key.k0);
    __m256i k1 = _mm256_set1_epi64x(key.k1);
    for (int round = 0; round < detail::kPhiloxRounds; ++round) {
      const __m256i p0 = _mm256_mul_epu32(x0, m0);
      const __m256i p1 = _mm256_mul_epu32(x2, m1);
      const __m256i n0 = _mm256_xor_si256(
          _mm256_xor_si256(_mm256_srli_epi64(p1, 32), x1), k0);
      const __m256i n1 = _mm256_and_si256(p1, lo32);
      const __m256i n2 = _mm256_xor_si256(
          _mm256_xor_si256(_mm256_srli_epi64(p0, 32), x3), k1);
      const __m256i n3 = _mm256_and_si256(p0, lo32);
      x0 = n0;
      x1 = n1;
      x2 = n2;
      x3 = n3;
      k0 = _mm256_and_si256(_mm256_add_epi64(k0, w0), lo32);
      k1 = _mm256_and_si256(_mm256_add_epi64(k1, w1), lo32);
    }
    _mm256_store_si256(reinterpret_cast<__m256i*>(r[0]), x0);
    _mm256_store_si256(reinterpret_cast<__m256i*>(r[1]), x1);
    _mm256_store_si256(reinterpret_cast<__m256i*>(r[2]), x2);
    _mm256_store_si256(reinterpret_cast<__m256i*>(r[3]), x3);
    for (std::size_t l = 0; l < 4; ++l) {
      for (std::size_t w = 0; w < 4; ++w) {
        out[4 * (i + l) + w] = static_cast<std::uint32_t>(r[w][l]);
      }
    }
  }
  for (std::size_t i = body; i < count; ++i) {
    std::uint32_t c[4] = {first + static_cast<std::uint32_t>(i), c1, c2, c3};
    detail::philox4x32_10(c, key.k0, key.k1);
    for (std::size_t w = 0; w < 4; ++w) out[4 * i + w] = c[w];
  }
}

void euler_update_avx2(double* x, const double* drift, const double* noise,
                       double h, std::size_t n) {
  const __m256d hv = _mm256_set1_pd(h);
  const std::size_t body = n & ~std::size_t{3};
  for (std::size_t i = 0; i < body; i += 4) {
    const __m256d hd = _mm256_mul_pd(hv, _mm256_loadu_pd(drift + i));
    const __m256d xv = _mm256_add_pd(_mm256_loadu_pd(x + i), hd);
    _mm256_storeu_pd(x + i, _mm256_add_pd(xv, _mm256_loadu_pd(noise + i)));
  }
  for (std::size_t i = body; i < n; ++i) {
    const double hd = h * drift[i];
    x[i] = (x[i] + hd) + noise[i];
  }
}

double combine_lanes(__m256d v) {
  alignas(32) double l[4];
  _mm256_store_pd(l, v);
  return (l[0] + l[1]) + (l[2] + l[3]);
}

Sums3 weighted_sums_avx2(const double* v, const double* w, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  __m256d s2 = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  const std::size_t body = n & ~std::size_t{3};
  for (std::size_t i = 0; i < body; i += 4) {
    const __m256d vi = _mm256_loadu_pd(v + i);
    const __m256d wi = w ? _mm256_loadu_pd(w + i) : one;
    const __m256d wv = _mm256_mul_pd(wi, vi);
    s0 = _mm256_add_pd(s0, wi);
    s1 = _mm256_add_pd(s1, wv);
    s2 = _mm256_add_pd(s2, _mm256_mul_pd(wv, vi));
  }
  Sums3 r;
  r.weight = combine_lanes(s0);
  r.first = combine_lanes(s1);
  r.second = combine_lanes(s2);
  for (std::size_t i = body; i < n; ++i) {
    const double wi = w ? w[i] : 1.0;
    const double wv = wi * v[i];
    r.weight += wi;
    r.first += wv;
    r.second += wv * v[i];
  }
  return r;
}

double weighted_sq_diff_avx2(const double* a, const double* b, const double* w,
                             std::size_t n) {
  __m256d s = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  const std::size_t body = n & ~std::size_t{3};
  for (std::size_t i = 0; i < body; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    const __m256d wi = w ? _mm256_loadu_pd(w + i) : one;
    s = _mm256_add_pd(s, _mm256_mul_pd(_mm256_mul_pd(wi, d), d));
  }
  double r = combine_lanes(s);
  for (std::size_t i = body; i < n; ++i) {
    const double d = a[i] - b[i];
    const double wd = (w ? w[i] : 1.0) * d;
    r += wd * d;
  }
  return r;
}

void accumulate_avx2(double* acc, const double* v, std::size_t n) {
  const std::size_t body = n & ~std::size_t{3};
  for (std::size_t i = 0; i < body; i += 4) {
    _mm256_storeu_pd(acc + i, _mm256_add_pd(_mm256_loadu_pd(acc + i),
                                            _mm256_loadu_pd(v + i)));
  }
  for (std::size_t i = body; i < n; ++i) acc[i] += v[i];
}

double unit53(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return static_cast<double>(bits) * 0x1.0p-53;
}

__m256d horner(const double* coef, int n, __m256d x) {
  __m256d p = _mm256_set1_pd(coef[0]);
  for (int i = 1; i < n; ++i) {
    p = _mm256_add_pd(_mm256_mul_pd(p, x), _mm256_set1_pd(coef[i]));
  }
  return p;
}

__m256d log_avx2(__m256d v) {
  const __m256i bits = _mm256_castpd_si256(v);
  const __m256i ebits =
      _mm256_or_si256(_mm256_srli_epi64(bits, 52), _mm256_set1_epi64x(0x4330000000000000LL));
  __m256d e = _mm256_sub_pd(_mm256_castsi256_pd(ebits),
                            _mm256_set1_pd(detail::kTwo52 + 1023.0));
  const __m256i mbits =
      _mm256_or_si256(_mm256_and_si256(bits, _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL)),
                      _mm256_set1_epi64x(0x3FF0000000000000LL));
  __m256d m = _mm256_castsi256_pd(mbits);
  const __m256d big = _mm256_cmp_pd(m, _mm256_set1_pd(detail::kSqrt2), _CMP_GT_OQ);
  m = _mm256_blendv_pd(m, _mm256_mul_pd(m, _mm256_set1_pd(0.5)), big);
  e = _mm256_blendv_pd(e, _mm256_add_pd(e, _mm256_set1_pd(1.0)), big);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d s = _mm256_div_pd(_mm256_sub_pd(m, one), _mm256_add_pd(m, one));
  const __m256d s2 = _mm256_mul_pd(s, s);
  const __m256d p = horner(detail::kAtanh, 10, s2);
  const __m256d two_s = _mm256_add_pd(s, s);
  const __m256d lm = _mm256_add_pd(two_s, _mm256_mul_pd(two_s, _mm256_mul_pd(s2, p)));
  return _mm256_add_pd(
      _mm256_mul_pd(e, _mm256_set1_pd(detail::kLn2Hi)),
      _mm256_add_pd(_mm256_mul_pd(e, _mm256_set1_pd(detail::kLn2Lo)), lm));
}

void sincos_turns_avx2(__m256d u, __m256d& c_out, __m256d& s_out) {
  const __m256d q = _mm256_floor_pd(
      _mm256_add_pd(_mm256_mul_pd(u, _mm256_set1_pd(4.0)), _mm256_set1_pd(0.5)));
  const __m256d f = _mm256_sub_pd(u, _mm256_mul_pd(q, _mm256_set1_pd(0.25)));
  const __m256d a = _mm256_mul_pd(f, _mm256_set1_pd(detail::kTwoPi));
  const __m256d a2 = _mm256_mul_pd(a, a);
  const __m256d ps = horner(detail::kSin, 8, a2);
  const __m256d pc = horner(detail::kCos, 8, a2);
  const __m256d sn = _mm256_add_pd(a, _mm256_mul_pd(_mm256_mul_pd(a, a2), ps));
  const __m256d cs =
      _mm256_add_pd(_mm256_sub_pd(_mm256_set1_pd(1.0), _mm256_mul_pd(_mm256_set1_pd(0.5), a2)),
                    _mm256_mul_pd(_mm256_mul_pd(a2, a2), pc));
  const __m256d sign = _mm256_set1_pd(-0.0);
  const __m256d nsn = _mm256_xor_pd(sn, sign);
  const __m256d ncs = _mm256_xor_pd(cs, sign);
  const __m256d q1 = _mm256_cmp_pd(q, _mm256_set1_pd(1.0), _CMP_EQ_OQ);
  const __m256d q2 = _mm256_cmp_pd(q, _mm256_set1_pd(2.0), _CMP_EQ_OQ);
  const __m256d q3 = _mm256_cmp_pd(q, _mm256_set1_pd(3.0), _CMP_EQ_OQ);
  __m256d c = cs, s = sn;
  c = _mm256_blendv_pd(c, nsn, q1);
  s = _mm256_blendv_pd(s, cs, q1);
  c = _mm256_blendv_pd(c, ncs, q2);
  s = _mm256_blendv_pd(s, nsn, q2);
  c = _mm256_blendv_pd(c, sn, q3);
  s = _mm256_blendv_pd(s, ncs, q3);
  c_out = c;
  s_out = s;
}

void box_muller_avx2(const std::uint32_t* words, std::size_t count, double* z0,
                     double* z1) {
  const std::size_t body = count & ~std::size_t{3};
  alignas(32) double u1[4], u2[4];
  for (std::size_t i = 0; i < body; i += 4) {
    for (std::size_t l = 0; l < 4; ++l) {
      const std::uint32_t* w = words + 4 * (i + l);
      u1[l] = unit53(w[0], w[1]);
      u2[l] = unit53(w[2], w[3]);
    }
    const __m256d lg = log_avx2(_mm256_sub_pd(_mm256_set1_pd(1.0), _mm256_load_pd(u1)));
    const __m256d r = _mm256_sqrt_pd(_mm256_mul_pd(_mm256_set1_pd(-2.0), lg));
    __m256d c, s;
    sincos_turns_avx2(_mm256_load_pd(u2), c, s);
    _mm256_storeu_pd(z0 + i, _mm256_mul_pd(r, c));
    if (z1) _mm256_storeu_pd(z1 + i, _mm256_mul_pd(r, s));
  }
  for (std::size_t i = body; i < count; ++i) {
    const std::uint32_t* w = words + 4 * i;
    const double r = std::sqrt(-2.0 * detail::det_log(1.0 - unit53(w[0], w[1])));
    double c, s;
    detail::det_sincos_turns(unit53(w[2], w[3]), c, s);
    z0[i] = r * c;
    if (z1) z1[i] = r * s;
  }
}

}  // namespace

namespace detail {
const KernelTable& avx2_table() {
  static const KernelTable table{Isa::avx2,          philox_blocks_avx2,
                                 euler_update_avx2,  weighted_sums_avx2,
                                 weighted_sq_diff_avx2, accumulate_avx2,
                                 box_muller_avx2};
  return table;
}
}  // namespace detail

}  // namespace mmv::simd
