#include "pcmarg/simd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pcmarg::simd {
namespace {

void exp_offset_scalar(const double* x, double shift, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i] - shift);
}

void log_add_exp_scalar(const double* a, const double* b, double* out, std::size_t n) {
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double hi = std::max(a[i], b[i]);
    const double lo = std::min(a[i], b[i]);
    out[i] = hi == neg_inf ? neg_inf : hi + std::log1p(std::exp(lo - hi));
  }
}

void mat_vec_scalar(const double* mat, const double* v, double* out, std::size_t rows,
                    std::size_t cols) {
  for (std::size_t j = 0; j < rows; ++j) {
    const double* row = mat + j * cols;
    double acc = 0.0;
    for (std::size_t k = 0; k < cols; ++k) acc += row[k] * v[k];
    out[j] = acc;
  }
}

void mat_vec_backward_scalar(const double* mat, const double* v, const double* coeff,
                             double* grad_mat, double* grad_v, std::size_t rows,
                             std::size_t cols) {
  std::fill(grad_v, grad_v + cols, 0.0);
  for (std::size_t j = 0; j < rows; ++j) {
    const double c = coeff[j];
    if (c == 0.0) continue;
    const double* row = mat + j * cols;
    double* grow = grad_mat + j * cols;
    for (std::size_t k = 0; k < cols; ++k) {
      const double t = c * row[k];
      grad_v[k] += t;
      grow[k] += t * v[k];
    }
  }
  for (std::size_t k = 0; k < cols; ++k) grad_v[k] *= v[k];
}

constexpr KernelTable kScalarTable{
    Isa::Scalar, "scalar", exp_offset_scalar, log_add_exp_scalar, mat_vec_scalar,
    mat_vec_backward_scalar,
};

}  // namespace

const KernelTable& scalar_kernels() { return kScalarTable; }

}  // namespace pcmarg::simd
