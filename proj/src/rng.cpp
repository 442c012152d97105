#include "mmv/rng.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace mmv {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Stream::Stream(std::uint64_t seed, StreamTag tag, std::uint64_t sub) {
  std::uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ (static_cast<std::uint64_t>(tag) * 0x9E3779B97F4A7C15ULL));
  k = splitmix64(k ^ sub);
  key_.k0 = static_cast<std::uint32_t>(k);
  key_.k1 = static_cast<std::uint32_t>(k >> 32);
}

namespace {

constexpr std::size_t kChunk = 256;

}  // namespace

void Stream::normals(std::uint64_t step, std::uint32_t first, std::size_t count,
                     int dim, double* out) const {
  const auto& k = simd::kernels();
  const auto d = static_cast<std::size_t>(dim);
  const std::uint32_t blocks = static_cast<std::uint32_t>((d + 1) / 2);
  const auto lo = static_cast<std::uint32_t>(step);
  const auto hi = static_cast<std::uint32_t>(step >> 32);
  std::uint32_t buf[4 * kChunk];
  double z0[kChunk], z1[kChunk];
  for (std::size_t off = 0; off < count; off += kChunk) {
    const std::size_t m = std::min(kChunk, count - off);
    for (std::uint32_t b = 0; b < blocks; ++b) {
      k.philox_blocks(key_, first + static_cast<std::uint32_t>(off), lo, hi, b,
                      m, buf);
      const std::size_t c0 = 2 * static_cast<std::size_t>(b);
      const bool pair = c0 + 1 < d;
      if (d == 1) {
        k.box_muller(buf, m, out + off, nullptr);
        continue;
      }
      k.box_muller(buf, m, z0, pair ? z1 : nullptr);
      for (std::size_t i = 0; i < m; ++i) {
        double* row = out + (off + i) * d;
        row[c0] = z0[i];
        if (pair) row[c0 + 1] = z1[i];
      }
    }
  }
}

void Stream::uniforms(std::uint64_t step, std::uint32_t first,
                      std::size_t count, int dim, double* out) const {
  const auto& k = simd::kernels();
  const auto d = static_cast<std::size_t>(dim);
  const std::uint32_t blocks = static_cast<std::uint32_t>((d + 1) / 2);
  const auto lo = static_cast<std::uint32_t>(step);
  const auto hi = static_cast<std::uint32_t>(step >> 32);
  std::uint32_t buf[4 * kChunk];
  for (std::size_t off = 0; off < count; off += kChunk) {
    const std::size_t m = std::min(kChunk, count - off);
    for (std::uint32_t b = 0; b < blocks; ++b) {
      // Uniform blocks live above the normal blocks in the counter space.
      k.philox_blocks(key_, first + static_cast<std::uint32_t>(off), lo, hi,
                      0x80000000u | b, m, buf);
      const std::size_t c0 = 2 * static_cast<std::size_t>(b);
      for (std::size_t i = 0; i < m; ++i) {
        double* row = out + (off + i) * d;
        row[c0] = to_unit(buf[4 * i], buf[4 * i + 1]);
        if (c0 + 1 < d) row[c0 + 1] = to_unit(buf[4 * i + 2], buf[4 * i + 3]);
      }
    }
  }
}

double Stream::normal(std::uint64_t step, std::uint32_t particle,
                      int component) const {
  std::vector<double> row(static_cast<std::size_t>(component) + 1);
  normals(step, particle, 1, component + 1, row.data());
  return row.back();
}

double Stream::uniform(std::uint64_t step, std::uint32_t particle,
                       int component) const {
  std::vector<double> row(static_cast<std::size_t>(component) + 1);
  uniforms(step, particle, 1, component + 1, row.data());
  return row.back();
}

}  // namespace mmv
