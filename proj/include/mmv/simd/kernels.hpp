#pragma once

// Data-parallel inner loops of the particle engine. Every kernel has a scalar
// reference implementation and, where the CPU allows it, an AVX2 variant that
// produces bit-identical results. Reductions use a fixed four-lane order
// (index mod 4, lanes combined as (l0 + l1) + (l2 + l3), tail added last) in
// both variants so the choice of kernel set never changes a result.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace mmv::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

struct PhiloxKey {
  std::uint32_t k0 = 0;
  std::uint32_t k1 = 0;
};

struct Sums3 {
  double weight = 0.0;    // sum w
  double first = 0.0;     // sum w v
  double second = 0.0;    // sum w v^2
};

struct KernelTable {
  Isa isa;

  // Philox4x32-10 on counters {first + i, c1, c2, c3}, i in [0, count).
  // Writes 4 words per counter to out[4 * i .. 4 * i + 3].
  void (*philox_blocks)(PhiloxKey key, std::uint32_t first, std::uint32_t c1,
                        std::uint32_t c2, std::uint32_t c3, std::size_t count,
                        std::uint32_t* out);

  // x[i] = (x[i] + h * drift[i]) + noise[i]
  void (*euler_update)(double* x, const double* drift, const double* noise,
                       double h, std::size_t n);

  // Weighted power sums; weights == nullptr means unit weights.
  Sums3 (*weighted_sums)(const double* v, const double* weights,
                         std::size_t n);

  // sum w[i] * (a[i] - b[i])^2; weights == nullptr means unit weights.
  double (*weighted_sq_diff)(const double* a, const double* b,
                             const double* weights, std::size_t n);

  // acc[i] += v[i]
  void (*accumulate)(double* acc, const double* v, std::size_t n);

  // Box-Muller on pairs of 53-bit uniforms built from words[4i .. 4i+3]:
  // z0[i] = r cos(2 pi u2), z1[i] = r sin(2 pi u2), r = sqrt(-2 log(1 - u1)).
  // z1 may be nullptr.
  void (*box_muller)(const std::uint32_t* words, std::size_t count, double* z0,
                     double* z1);
};

const KernelTable& scalar_kernels();

// nullptr when the build has no AVX2 variant or the CPU lacks AVX2.
const KernelTable* avx2_kernels();

// Active kernel set. Chosen once from MMV_SIMD (scalar|avx2) if set,
// otherwise the best set the CPU supports.
const KernelTable& kernels();

// Forces a kernel set; throws ValidationError if it is unavailable.
void set_isa(Isa isa);

Isa active_isa();

}  // namespace mmv::simd
