#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "pcmarg/random.hpp"
#include "pcmarg/simd/kernels.hpp"

using namespace pcmarg;
using namespace pcmarg::simd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * uniform01(rng);
  return v;
}

bool close(double a, double b, double rel, double abs_tol) {
  if (a == b) return true;
  if (std::isnan(a) || std::isnan(b)) return false;
  return std::fabs(a - b) <= rel * std::max(std::fabs(a), std::fabs(b)) + abs_tol;
}

const KernelTable* wide() {
  if (!cpu_supports_avx2()) return nullptr;
  return avx2_kernels();
}

}  // namespace

TEST_CASE("scalar reference kernels follow their definitions") {
  const auto& k = scalar_kernels();
  const std::vector<double> x{0.0, -1.0, 2.5, -kInf};
  std::vector<double> out(4);
  k.exp_offset(x.data(), 1.0, out.data(), 4);
  CHECK(out[0] == std::exp(-1.0));
  CHECK(out[2] == std::exp(1.5));
  CHECK(out[3] == 0.0);

  const std::vector<double> a{0.0, -kInf, std::log(2.0), -kInf};
  const std::vector<double> b{0.0, 1.0, std::log(3.0), -kInf};
  k.log_add_exp(a.data(), b.data(), out.data(), 4);
  CHECK(out[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(out[1] == 1.0);
  CHECK(out[2] == doctest::Approx(std::log(5.0)).epsilon(1e-15));
  CHECK(out[3] == -kInf);

  const std::vector<double> m{1, 2, 3, 4, 5, 6};
  const std::vector<double> v{1, 0.5, 2};
  std::vector<double> mv(2);
  k.mat_vec(m.data(), v.data(), mv.data(), 2, 3);
  CHECK(mv[0] == 1 + 1 + 6);
  CHECK(mv[1] == 4 + 2.5 + 12);

  const std::vector<double> coeff{2, -1};
  std::vector<double> gm(6, 1.0), gv(3, 99.0);
  k.mat_vec_backward(m.data(), v.data(), coeff.data(), gm.data(), gv.data(), 2, 3);
  CHECK(gm[0] == 1 + 2 * 1 * 1);
  CHECK(gm[5] == 1 - 1 * 6 * 2);
  CHECK(gv[0] == 1 * (2 * 1 - 1 * 4));
  CHECK(gv[2] == 2 * (2 * 3 - 1 * 6));
}

TEST_CASE("AVX2 kernels agree with the scalar reference") {
  const KernelTable* w = wide();
  if (w == nullptr) {
    MESSAGE("AVX2 variant unavailable on this machine; equivalence not exercised");
    return;
  }
  const auto& s = scalar_kernels();
  Rng rng = make_rng(17);

  SUBCASE("exp_offset over the full finite range and every tail length") {
    for (std::size_t n = 0; n <= 37; ++n) {
      auto x = random_vec(rng, n, -760.0, 20.0);
      if (n > 3) x[n / 2] = -kInf;
      std::vector<double> a(n), b(n);
      s.exp_offset(x.data(), 3.0, a.data(), n);
      w->exp_offset(x.data(), 3.0, b.data(), n);
      for (std::size_t i = 0; i < n; ++i) {
        INFO("n=" << n << " x=" << x[i]);
        // Results below the normal range may flush to zero.
        CHECK(close(a[i], b[i], 4e-16, 3e-308));
      }
    }
  }

  SUBCASE("log_add_exp including infinities and large gaps") {
    for (std::size_t n = 0; n <= 37; ++n) {
      auto a = random_vec(rng, n, -900.0, 50.0);
      auto b = random_vec(rng, n, -900.0, 50.0);
      if (n > 2) a[1] = -kInf;
      if (n > 5) a[4] = b[4] = -kInf;
      if (n > 7) b[6] = a[6] - 60.0;
      std::vector<double> r1(n), r2(n);
      s.log_add_exp(a.data(), b.data(), r1.data(), n);
      w->log_add_exp(a.data(), b.data(), r2.data(), n);
      for (std::size_t i = 0; i < n; ++i) {
        INFO("a=" << a[i] << " b=" << b[i]);
        CHECK(close(r1[i], r2[i], 1e-15, 1e-13));
      }
    }
  }

  SUBCASE("mat_vec and mat_vec_backward") {
    for (std::size_t rows : {1u, 3u, 8u, 64u}) {
      for (std::size_t cols : {1u, 5u, 16u, 64u, 67u}) {
        auto m = random_vec(rng, rows * cols, 0.0, 1.0);
        auto v = random_vec(rng, cols, 0.0, 2.0);
        auto c = random_vec(rng, rows, -1.0, 1.0);
        std::vector<double> o1(rows), o2(rows);
        s.mat_vec(m.data(), v.data(), o1.data(), rows, cols);
        w->mat_vec(m.data(), v.data(), o2.data(), rows, cols);
        for (std::size_t j = 0; j < rows; ++j) CHECK(close(o1[j], o2[j], 1e-13, 0.0));

        std::vector<double> g1(rows * cols, 0.25), g2(rows * cols, 0.25), gv1(cols), gv2(cols);
        s.mat_vec_backward(m.data(), v.data(), c.data(), g1.data(), gv1.data(), rows, cols);
        w->mat_vec_backward(m.data(), v.data(), c.data(), g2.data(), gv2.data(), rows, cols);
        for (std::size_t i = 0; i < rows * cols; ++i) CHECK(close(g1[i], g2[i], 1e-14, 1e-16));
        for (std::size_t k = 0; k < cols; ++k) CHECK(close(gv1[k], gv2[k], 1e-12, 1e-14));
      }
    }
  }
}

TEST_CASE("runtime dispatch and scoped override") {
  const Isa initial = active_kernels().isa;
  if (wide() != nullptr) CHECK(initial == Isa::Avx2);
  {
    ScopedKernels pin(Isa::Scalar);
    CHECK(active_kernels().isa == Isa::Scalar);
    CHECK(active_kernels().name == scalar_kernels().name);
  }
  CHECK(active_kernels().isa == initial);
  if (avx2_kernels() == nullptr) CHECK_THROWS_AS(select_kernels(Isa::Avx2), std::invalid_argument);
}
