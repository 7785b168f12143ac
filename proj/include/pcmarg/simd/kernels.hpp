#pragma once
// Log-domain arithmetic kernels shared by the circuit and the DP table.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2/FMA variant. The variant is chosen once at startup from the CPU
// feature flags; tests pin either table explicitly and compare them.

#include <cstddef>
#include <span>
#include <string_view>

namespace pcmarg::simd {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
  Isa isa;
  std::string_view name;

  // out[i] = exp(x[i] - shift)
  void (*exp_offset)(const double* x, double shift, double* out, std::size_t n);

  // out[i] = log(exp(a[i]) + exp(b[i])); -inf operands are legal.
  void (*log_add_exp)(const double* a, const double* b, double* out, std::size_t n);

  // out[j] = sum_k mat[j * cols + k] * v[k]
  void (*mat_vec)(const double* mat, const double* v, double* out, std::size_t rows,
                  std::size_t cols);

  // grad_mat[j * cols + k] += coeff[j] * mat[j * cols + k] * v[k]
  // grad_v[k]               = v[k] * sum_j coeff[j] * mat[j * cols + k]
  void (*mat_vec_backward)(const double* mat, const double* v, const double* coeff,
                           double* grad_mat, double* grad_v, std::size_t rows,
                           std::size_t cols);
};

const KernelTable& scalar_kernels();

// nullptr when the AVX2 variant was not compiled in.
const KernelTable* avx2_kernels();

bool cpu_supports_avx2();

// The table used by library code. Defaults to the widest variant the CPU runs.
const KernelTable& active_kernels();

// Throws std::invalid_argument if the requested variant is unavailable.
void select_kernels(Isa isa);

// RAII override of the active table, for tests and benchmarks.
class ScopedKernels {
 public:
  explicit ScopedKernels(Isa isa);
  ~ScopedKernels();
  ScopedKernels(const ScopedKernels&) = delete;
  ScopedKernels& operator=(const ScopedKernels&) = delete;

 private:
  Isa previous_;
};

inline void exp_offset(std::span<const double> x, double shift, std::span<double> out) {
  active_kernels().exp_offset(x.data(), shift, out.data(), x.size());
}

inline void log_add_exp(std::span<const double> a, std::span<const double> b,
                        std::span<double> out) {
  active_kernels().log_add_exp(a.data(), b.data(), out.data(), a.size());
}

}  // namespace pcmarg::simd
