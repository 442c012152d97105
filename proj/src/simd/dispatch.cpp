#include <atomic>
#include <cstdlib>
#include <string>

#include "mmv/error.hpp"
#include "mmv/simd/kernels.hpp"

namespace mmv::simd {

#ifdef MMV_HAVE_AVX2
namespace detail {
const KernelTable& avx2_table();
}
#endif

namespace {

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{nullptr};
  return slot;
}

const KernelTable* initial_choice() {
  const char* env = std::getenv("MMV_SIMD");
  if (env != nullptr) {
    const std::string want(env);
    if (want == "scalar") return &scalar_kernels();
    if (want == "avx2" && avx2_kernels() != nullptr) return avx2_kernels();
  }
  if (const KernelTable* t = avx2_kernels()) return t;
  return &scalar_kernels();
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

const KernelTable* avx2_kernels() {
#ifdef MMV_HAVE_AVX2
  static const bool supported = __builtin_cpu_supports("avx2");
  if (supported) return &detail::avx2_table();
#endif
  return nullptr;
}

const KernelTable& kernels() {
  const KernelTable* t = active_slot().load(std::memory_order_acquire);
  if (t == nullptr) {
    const KernelTable* chosen = initial_choice();
    active_slot().compare_exchange_strong(t, chosen, std::memory_order_acq_rel);
    t = active_slot().load(std::memory_order_acquire);
  }
  return *t;
}

void set_isa(Isa isa) {
  const KernelTable* t = nullptr;
  if (isa == Isa::scalar) t = &scalar_kernels();
  if (isa == Isa::avx2) t = avx2_kernels();
  require(t != nullptr,
          "kernel set '" + std::string(isa_name(isa)) + "' is not available");
  active_slot().store(t, std::memory_order_release);
}

Isa active_isa() { return kernels().isa; }

}  // namespace mmv::simd
