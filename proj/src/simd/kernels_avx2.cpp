// AVX2/FMA variants. This translation unit is the only one built with
// -mavx2 -mfma; nothing here runs unless dispatch confirmed CPU support.

#include "pcmarg/simd/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace pcmarg::simd {
namespace {

// Cephes-style exp: x = n ln2 + r, |r| <= ln2/2, exp(r) by a (2,3) Pade form.
// Accurate to about 1 ulp over the whole double range; the 2^n scaling is
// split in two factors so that subnormal results come out right.
inline __m256d exp_pd(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
  const __m256d c1 = _mm256_set1_pd(6.93145751953125E-1);
  const __m256d c2 = _mm256_set1_pd(1.42860682030941723212E-6);
  const __m256d p0 = _mm256_set1_pd(1.26177193074810590878E-4);
  const __m256d p1 = _mm256_set1_pd(3.02994407707441961300E-2);
  const __m256d p2 = _mm256_set1_pd(9.99999999999999999910E-1);
  const __m256d q0 = _mm256_set1_pd(3.00198505138664455042E-6);
  const __m256d q1 = _mm256_set1_pd(2.52448340349684104192E-3);
  const __m256d q2 = _mm256_set1_pd(2.27265548208155028766E-1);
  const __m256d q3 = _mm256_set1_pd(2.00000000000000000009E0);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d two = _mm256_set1_pd(2.0);
  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d lo_limit = _mm256_set1_pd(-745.2);
  const __m256d hi_limit = _mm256_set1_pd(709.79);

  const __m256d xc = _mm256_min_pd(_mm256_max_pd(x, lo_limit), hi_limit);
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(xc, log2e),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, c1, xc);
  r = _mm256_fnmadd_pd(n, c2, r);
  const __m256d rr = _mm256_mul_pd(r, r);
  const __m256d p = _mm256_mul_pd(r, _mm256_fmadd_pd(_mm256_fmadd_pd(p0, rr, p1), rr, p2));
  const __m256d q =
      _mm256_fmadd_pd(_mm256_fmadd_pd(_mm256_fmadd_pd(q0, rr, q1), rr, q2), rr, q3);
  __m256d e = _mm256_div_pd(p, _mm256_sub_pd(q, p));
  e = _mm256_fmadd_pd(two, e, one);

  const __m256d n1 = _mm256_floor_pd(_mm256_mul_pd(n, half));
  const __m256d n2 = _mm256_sub_pd(n, n1);
  const __m256i bias = _mm256_set1_epi64x(1023);
  auto pow2 = [&](__m256d k) {
    const __m256i k64 = _mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(k));
    return _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_add_epi64(k64, bias), 52));
  };
  e = _mm256_mul_pd(_mm256_mul_pd(e, pow2(n1)), pow2(n2));

  const __m256d zero = _mm256_setzero_pd();
  const __m256d inf = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  e = _mm256_blendv_pd(e, zero, _mm256_cmp_pd(x, lo_limit, _CMP_LT_OQ));
  e = _mm256_blendv_pd(e, inf, _mm256_cmp_pd(x, hi_limit, _CMP_GT_OQ));
  e = _mm256_blendv_pd(e, x, _mm256_cmp_pd(x, x, _CMP_UNORD_Q));
  return e;
}

// Natural log for positive normal inputs (Cephes rational form, |e| <= 2
// branch generalized to any exponent).
inline __m256d log_pd(__m256d x) {
  const __m256d p0 = _mm256_set1_pd(1.01875663804580931796E-4);
  const __m256d p1 = _mm256_set1_pd(4.97494994976747001425E-1);
  const __m256d p2 = _mm256_set1_pd(4.70579119878881725854E0);
  const __m256d p3 = _mm256_set1_pd(1.44989225341610930846E1);
  const __m256d p4 = _mm256_set1_pd(1.79368678507819816313E1);
  const __m256d p5 = _mm256_set1_pd(7.70838733755885391666E0);
  const __m256d q0 = _mm256_set1_pd(1.12873587189167450590E1);
  const __m256d q1 = _mm256_set1_pd(4.52279145837532221105E1);
  const __m256d q2 = _mm256_set1_pd(8.29875266912776603211E1);
  const __m256d q3 = _mm256_set1_pd(7.11544750618805314024E1);
  const __m256d q4 = _mm256_set1_pd(2.31251620126765340583E1);
  const __m256d sqrt_half = _mm256_set1_pd(0.70710678118654752440);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d ln2_hi = _mm256_set1_pd(0.693359375);
  const __m256d ln2_lo = _mm256_set1_pd(-2.121944400546905827679E-4);

  // frexp: x = m * 2^e with m in [0.5, 1).
  const __m256i bits = _mm256_castpd_si256(x);
  const __m256i mant_mask = _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL);
  const __m256i half_exp = _mm256_set1_epi64x(0x3FE0000000000000LL);
  __m256d m = _mm256_castsi256_pd(_mm256_or_si256(_mm256_and_si256(bits, mant_mask), half_exp));
  // Biased exponent into a double via the 2^52 magic constant.
  const __m256i biased = _mm256_srli_epi64(bits, 52);
  const __m256i magic_bits = _mm256_set1_epi64x(0x4330000000000000LL);
  const __m256d magic = _mm256_castsi256_pd(magic_bits);
  __m256d e = _mm256_sub_pd(_mm256_castsi256_pd(_mm256_or_si256(biased, magic_bits)), magic);
  e = _mm256_sub_pd(e, _mm256_set1_pd(1022.0));

  const __m256d small = _mm256_cmp_pd(m, sqrt_half, _CMP_LT_OQ);
  e = _mm256_sub_pd(e, _mm256_and_pd(small, one));
  m = _mm256_add_pd(m, _mm256_and_pd(small, m));
  const __m256d t = _mm256_sub_pd(m, one);

  const __m256d z = _mm256_mul_pd(t, t);
  __m256d num = _mm256_fmadd_pd(p0, t, p1);
  num = _mm256_fmadd_pd(num, t, p2);
  num = _mm256_fmadd_pd(num, t, p3);
  num = _mm256_fmadd_pd(num, t, p4);
  num = _mm256_fmadd_pd(num, t, p5);
  __m256d den = _mm256_add_pd(t, q0);
  den = _mm256_fmadd_pd(den, t, q1);
  den = _mm256_fmadd_pd(den, t, q2);
  den = _mm256_fmadd_pd(den, t, q3);
  den = _mm256_fmadd_pd(den, t, q4);
  __m256d y = _mm256_mul_pd(t, _mm256_div_pd(_mm256_mul_pd(z, num), den));
  y = _mm256_fmadd_pd(e, ln2_lo, y);
  y = _mm256_fnmadd_pd(half, z, y);
  __m256d out = _mm256_add_pd(t, y);
  return _mm256_fmadd_pd(e, ln2_hi, out);
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

void exp_offset_avx2(const double* x, double shift, double* out, std::size_t n) {
  const __m256d s = _mm256_set1_pd(shift);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, exp_pd(_mm256_sub_pd(_mm256_loadu_pd(x + i), s)));
  }
  if (i < n) {
    alignas(32) double buf[4] = {-INFINITY, -INFINITY, -INFINITY, -INFINITY};
    for (std::size_t t = i; t < n; ++t) buf[t - i] = x[t];
    _mm256_store_pd(buf, exp_pd(_mm256_sub_pd(_mm256_load_pd(buf), s)));
    for (std::size_t t = i; t < n; ++t) out[t] = buf[t - i];
  }
}

inline __m256d log_add_exp_pd(__m256d a, __m256d b) {
  const __m256d neg_inf = _mm256_set1_pd(-std::numeric_limits<double>::infinity());
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d hi = _mm256_max_pd(a, b);
  const __m256d lo = _mm256_min_pd(a, b);
  const __m256d e = exp_pd(_mm256_sub_pd(lo, hi));
  const __m256d out = _mm256_add_pd(hi, log_pd(_mm256_add_pd(one, e)));
  return _mm256_blendv_pd(out, neg_inf, _mm256_cmp_pd(hi, neg_inf, _CMP_EQ_OQ));
}

void log_add_exp_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, log_add_exp_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  if (i < n) {
    alignas(32) double ba[4] = {0, 0, 0, 0};
    alignas(32) double bb[4] = {0, 0, 0, 0};
    for (std::size_t t = i; t < n; ++t) {
      ba[t - i] = a[t];
      bb[t - i] = b[t];
    }
    _mm256_store_pd(ba, log_add_exp_pd(_mm256_load_pd(ba), _mm256_load_pd(bb)));
    for (std::size_t t = i; t < n; ++t) out[t] = ba[t - i];
  }
}

void mat_vec_avx2(const double* mat, const double* v, double* out, std::size_t rows,
                  std::size_t cols) {
  const std::size_t body = cols & ~std::size_t{7};
  for (std::size_t j = 0; j < rows; ++j) {
    const double* row = mat + j * cols;
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t k = 0;
    for (; k < body; k += 8) {
      acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(row + k), _mm256_loadu_pd(v + k), acc0);
      acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(row + k + 4), _mm256_loadu_pd(v + k + 4), acc1);
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; k < cols; ++k) acc += row[k] * v[k];
    out[j] = acc;
  }
}

void mat_vec_backward_avx2(const double* mat, const double* v, const double* coeff,
                           double* grad_mat, double* grad_v, std::size_t rows,
                           std::size_t cols) {
  std::fill(grad_v, grad_v + cols, 0.0);
  const std::size_t body = cols & ~std::size_t{3};
  for (std::size_t j = 0; j < rows; ++j) {
    const double c = coeff[j];
    if (c == 0.0) continue;
    const __m256d cv = _mm256_set1_pd(c);
    const double* row = mat + j * cols;
    double* grow = grad_mat + j * cols;
    std::size_t k = 0;
    for (; k < body; k += 4) {
      const __m256d t = _mm256_mul_pd(cv, _mm256_loadu_pd(row + k));
      _mm256_storeu_pd(grad_v + k, _mm256_add_pd(_mm256_loadu_pd(grad_v + k), t));
      _mm256_storeu_pd(grow + k,
                       _mm256_fmadd_pd(t, _mm256_loadu_pd(v + k), _mm256_loadu_pd(grow + k)));
    }
    for (; k < cols; ++k) {
      const double t = c * row[k];
      grad_v[k] += t;
      grow[k] += t * v[k];
    }
  }
  std::size_t k = 0;
  for (; k < body; k += 4) {
    _mm256_storeu_pd(grad_v + k,
                     _mm256_mul_pd(_mm256_loadu_pd(grad_v + k), _mm256_loadu_pd(v + k)));
  }
  for (; k < cols; ++k) grad_v[k] *= v[k];
}

constexpr KernelTable kAvx2Table{
    Isa::Avx2, "avx2", exp_offset_avx2, log_add_exp_avx2, mat_vec_avx2, mat_vec_backward_avx2,
};

}  // namespace

const KernelTable* avx2_kernels_impl() { return &kAvx2Table; }

}  // namespace pcmarg::simd
