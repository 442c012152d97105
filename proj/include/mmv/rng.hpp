#pragma once

// Counter-based normal and uniform draws. A stream is identified by
// (seed, tag, sub); a draw inside a stream by (particle, step, component).
// Draws never depend on how many other draws were made, on thread count, or on
// the kernel set, which is what makes coupled runs and reruns reproducible.

#include <cstddef>
#include <cstdint>

#include "mmv/simd/kernels.hpp"

namespace mmv {

enum class StreamTag : std::uint32_t {
  init_slow = 1,
  init_fast = 2,
  slow = 3,
  fast = 4,
  frozen = 5,
  micro = 6,
  mollify = 7,
  resample = 8,
  probe = 9,
  poisson = 10,
  ergodic = 11,
  micro_init = 12,
};

std::uint64_t splitmix64(std::uint64_t x);

class Stream {
 public:
  Stream() = default;
  Stream(std::uint64_t seed, StreamTag tag, std::uint64_t sub = 0);

  const simd::PhiloxKey& key() const { return key_; }

  // out[i * dim + c] = N(0,1) draw for particle first + i, component c.
  void normals(std::uint64_t step, std::uint32_t first, std::size_t count,
               int dim, double* out) const;

  // out[i * dim + c] uniform on [0, 1).
  void uniforms(std::uint64_t step, std::uint32_t first, std::size_t count,
                int dim, double* out) const;

  double normal(std::uint64_t step, std::uint32_t particle, int component) const;
  double uniform(std::uint64_t step, std::uint32_t particle,
                 int component) const;

 private:
  simd::PhiloxKey key_;
};

// 53-bit uniform on [0, 1) from two words.
inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits =
      ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return static_cast<double>(bits) * 0x1.0p-53;
}

}  // namespace mmv
