#include "pcmarg/simd/kernels.hpp"

#include <atomic>
#include <stdexcept>

namespace pcmarg::simd {

#if defined(PCMARG_HAS_AVX2)
const KernelTable* avx2_kernels_impl();
#endif

const KernelTable* avx2_kernels() {
#if defined(PCMARG_HAS_AVX2)
  return avx2_kernels_impl();
#else
  return nullptr;
#endif
}

bool cpu_supports_avx2() {
#if defined(PCMARG_HAS_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

const KernelTable* detect() {
  if (cpu_supports_avx2()) return avx2_kernels();
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{detect()};
  return slot;
}

const KernelTable* lookup(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return &scalar_kernels();
    case Isa::Avx2:
      if (!cpu_supports_avx2()) {
        throw std::invalid_argument("AVX2 kernels unavailable on this build or CPU");
      }
      return avx2_kernels();
  }
  throw std::invalid_argument("unknown kernel ISA");
}

}  // namespace

const KernelTable& active_kernels() { return *active_slot().load(std::memory_order_acquire); }

void select_kernels(Isa isa) { active_slot().store(lookup(isa), std::memory_order_release); }

ScopedKernels::ScopedKernels(Isa isa) : previous_(active_kernels().isa) { select_kernels(isa); }

ScopedKernels::~ScopedKernels() { select_kernels(previous_); }

}  // namespace pcmarg::simd
