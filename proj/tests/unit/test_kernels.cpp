#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "postdiff/kernels.hpp"

using namespace postdiff::kernels;

namespace {

template <class T>
std::vector<T> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(u(rng));
  return v;
}

template <class T>
double tol();
template <>
double tol<float>() { return 2e-5; }
template <>
double tol<double>() { return 1e-12; }

template <class T>
void check_equivalence(const KernelTable<T>& ref, const KernelTable<T>& simd) {
  std::mt19937_64 rng(42);
  for (std::size_t n : {0u, 1u, 3u, 7u, 8u, 15u, 16u, 33u, 100u, 1027u}) {
    const auto a = random_vec<T>(n, rng), b = random_vec<T>(n, rng);
    const double scale = std::max<double>(1.0, std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(static_cast<double>(ref.dot(a.data(), b.data(), n) - simd.dot(a.data(), b.data(), n))) <=
          tol<T>() * scale);

    auto y1 = random_vec<T>(n, rng);
    auto y2 = y1;
    ref.axpy(T(0.37), a.data(), y1.data(), n);
    simd.axpy(T(0.37), a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(static_cast<double>(y1[i] - y2[i])) <= tol<T>());

    std::vector<T> t1(n), s1(n), g1(n), t2(n), s2(n), g2(n);
    auto big_a = a, big_b = b;
    for (std::size_t i = 0; i < n; ++i) {
      big_a[i] *= T(12);
      big_b[i] *= T(40);
    }
    ref.gated_tanh_sigmoid(big_a.data(), big_b.data(), t1.data(), s1.data(), g1.data(), n);
    simd.gated_tanh_sigmoid(big_a.data(), big_b.data(), t2.data(), s2.data(), g2.data(), n);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(static_cast<double>(t1[i] - t2[i])) <= 4 * tol<T>());
      CHECK(std::abs(static_cast<double>(s1[i] - s2[i])) <= 4 * tol<T>());
      CHECK(std::abs(static_cast<double>(g1[i] - g2[i])) <= 4 * tol<T>());
    }
  }

  struct Shape {
    std::size_t M, K, N;
  };
  for (const auto s : {Shape{1, 1, 1}, Shape{3, 5, 7}, Shape{4, 8, 16}, Shape{64, 32, 37},
                       Shape{5, 64, 129}, Shape{1, 32, 1000}}) {
    // Column-window views: leading dimensions larger than the logical width.
    const std::size_t lda = s.K + 3, ldb = s.N + 5, ldc = s.N + 2;
    const auto A = random_vec<T>(s.M * lda, rng);
    const auto B = random_vec<T>(s.K * ldb, rng);
    auto C1 = random_vec<T>(s.M * ldc, rng);
    auto C2 = C1;
    ref.gemm_acc(s.M, s.K, s.N, A.data(), lda, B.data(), ldb, C1.data(), ldc);
    simd.gemm_acc(s.M, s.K, s.N, A.data(), lda, B.data(), ldb, C2.data(), ldc);
    for (std::size_t i = 0; i < C1.size(); ++i)
      CHECK(std::abs(static_cast<double>(C1[i] - C2[i])) <= tol<T>() * std::sqrt(double(s.K)) * 2);

    const std::size_t ldbt = s.K + 1;
    const auto Bt = random_vec<T>(s.N * ldbt, rng);
    auto D1 = random_vec<T>(s.M * ldc, rng);
    auto D2 = D1;
    ref.gemm_abt_acc(s.M, s.N, s.K, A.data(), lda, Bt.data(), ldbt, D1.data(), ldc);
    simd.gemm_abt_acc(s.M, s.N, s.K, A.data(), lda, Bt.data(), ldbt, D2.data(), ldc);
    for (std::size_t i = 0; i < D1.size(); ++i)
      CHECK(std::abs(static_cast<double>(D1[i] - D2[i])) <= tol<T>() * std::sqrt(double(s.K)) * 2);
  }
}

}  // namespace

TEST_CASE("scalar kernels compute the reference formulas") {
  const auto& k = scalar_table_f64();
  const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  CHECK(k.dot(a.data(), b.data(), 3) == 32.0);
  std::vector<double> y{1, 1, 1};
  k.axpy(2.0, a.data(), y.data(), 3);
  CHECK(y == std::vector<double>{3, 5, 7});
  // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
  const std::vector<double> A{1, 2, 3, 4}, B{5, 6, 7, 8};
  std::vector<double> C(4, 1.0);
  k.gemm_acc(2, 2, 2, A.data(), 2, B.data(), 2, C.data(), 2);
  CHECK(C == std::vector<double>{20, 23, 44, 51});
  std::vector<double> D(4, 0.0);
  k.gemm_abt_acc(2, 2, 2, A.data(), 2, B.data(), 2, D.data(), 2);  // A * B^T
  CHECK(D == std::vector<double>{17, 23, 39, 53});
  double t, s, g;
  const double va = 0.3, vb = -0.7;
  k.gated_tanh_sigmoid(&va, &vb, &t, &s, &g, 1);
  CHECK(t == doctest::Approx(std::tanh(0.3)));
  CHECK(s == doctest::Approx(1.0 / (1.0 + std::exp(0.7))));
  CHECK(g == doctest::Approx(t * s));
}

TEST_CASE("AVX2 kernels match the scalar reference") {
  if (!isa_available(Isa::Avx2)) {
    MESSAGE("AVX2 not available on this machine/build; equivalence test skipped");
    return;
  }
  REQUIRE(avx2_table_f32() != nullptr);
  REQUIRE(avx2_table_f64() != nullptr);
  check_equivalence(scalar_table_f32(), *avx2_table_f32());
  check_equivalence(scalar_table_f64(), *avx2_table_f64());
}

TEST_CASE("gated activation saturates without overflow") {
  for (const auto* table : {&scalar_table_f32(), avx2_table_f32()}) {
    if (!table) continue;
    const std::vector<float> a{-200.f, -30.f, 0.f, 30.f, 200.f}, b{200.f, -200.f, 0.f, 90.f, -90.f};
    std::vector<float> t(5), s(5), g(5);
    table->gated_tanh_sigmoid(a.data(), b.data(), t.data(), s.data(), g.data(), 5);
    for (int i = 0; i < 5; ++i) {
      CHECK(std::isfinite(t[i]));
      CHECK(std::isfinite(s[i]));
      CHECK(std::isfinite(g[i]));
    }
    CHECK(t[0] == doctest::Approx(-1.0f));
    CHECK(t[4] == doctest::Approx(1.0f));
    CHECK(s[0] == doctest::Approx(1.0f));
    CHECK(s[1] == doctest::Approx(0.0f));
  }
}

TEST_CASE("runtime dispatch can be switched and restored") {
  const Isa before = active_isa();
  {
    ScopedIsa scope(Isa::Scalar);
    CHECK(active_isa() == Isa::Scalar);
    const std::vector<double> a{1, 2}, b{3, 4};
    CHECK(dot(a.data(), b.data(), 2) == 11.0);
  }
  CHECK(active_isa() == before);
  CHECK(isa_name(Isa::Scalar) == "scalar");
  CHECK(isa_available(Isa::Scalar));
}
