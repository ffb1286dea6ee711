// Compiled with -mavx2 -mfma. Only reached through the dispatch table after a
// runtime CPU check.

#include <immintrin.h>

#include <cmath>

#include "postdiff/kernels.hpp"

namespace postdiff::kernels {
namespace {

struct F32 {
  using T = float;
  using V = __m256;
  static constexpr std::size_t W = 8;
  static V load(const T* p) { return _mm256_loadu_ps(p); }
  static void store(T* p, V v) { _mm256_storeu_ps(p, v); }
  static V set1(T x) { return _mm256_set1_ps(x); }
  static V zero() { return _mm256_setzero_ps(); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
  static V add(V a, V b) { return _mm256_add_ps(a, b); }
  static V sub(V a, V b) { return _mm256_sub_ps(a, b); }
  static V mul(V a, V b) { return _mm256_mul_ps(a, b); }
  static V div(V a, V b) { return _mm256_div_ps(a, b); }
  static V min(V a, V b) { return _mm256_min_ps(a, b); }
  static V max(V a, V b) { return _mm256_max_ps(a, b); }
  static T hsum(V v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    __m128 s = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, s);
    s = _mm_add_ss(s, sh);
    return _mm_cvtss_f32(s);
  }

  // e^x for x in [-87, 87]; Cephes expf polynomial, ~2 ulp.
  static V exp(V x) {
    x = min(max(x, set1(-87.0f)), set1(87.0f));
    const V n = _mm256_round_ps(mul(x, set1(1.44269504088896341f)),
                                _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    V r = fma(n, set1(-0.693359375f), x);
    r = fma(n, set1(2.12194440e-4f), r);
    V p = set1(1.9875691500e-4f);
    p = fma(p, r, set1(1.3981999507e-3f));
    p = fma(p, r, set1(8.3334519073e-3f));
    p = fma(p, r, set1(4.1665795894e-2f));
    p = fma(p, r, set1(1.6666665459e-1f));
    p = fma(p, r, set1(5.0000001201e-1f));
    p = fma(p, mul(r, r), add(r, set1(1.0f)));
    const __m256i e = _mm256_slli_epi32(_mm256_add_epi32(_mm256_cvtps_epi32(n), _mm256_set1_epi32(127)), 23);
    return mul(p, _mm256_castsi256_ps(e));
  }
};

struct F64 {
  using T = double;
  using V = __m256d;
  static constexpr std::size_t W = 4;
  static V load(const T* p) { return _mm256_loadu_pd(p); }
  static void store(T* p, V v) { _mm256_storeu_pd(p, v); }
  static V set1(T x) { return _mm256_set1_pd(x); }
  static V zero() { return _mm256_setzero_pd(); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
  static V sub(V a, V b) { return _mm256_sub_pd(a, b); }
  static V mul(V a, V b) { return _mm256_mul_pd(a, b); }
  static V div(V a, V b) { return _mm256_div_pd(a, b); }
  static V min(V a, V b) { return _mm256_min_pd(a, b); }
  static V max(V a, V b) { return _mm256_max_pd(a, b); }
  static T hsum(V v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d h = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, h));
  }

  // e^x for x in [-708, 708]: range reduction by ln2, degree-12 Taylor on
  // |r| <= ln2/2 (truncation below 1e-16 relative).
  static V exp(V x) {
    x = min(max(x, set1(-708.0)), set1(708.0));
    const V n = _mm256_round_pd(mul(x, set1(1.4426950408889634)),
                                _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    V r = fma(n, set1(-6.93147180369123816490e-01), x);
    r = fma(n, set1(-1.90821492927058770002e-10), r);
    constexpr double c[] = {1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0,
                            1.0 / 362880.0,    1.0 / 40320.0,    1.0 / 5040.0,
                            1.0 / 720.0,       1.0 / 120.0,      1.0 / 24.0,
                            1.0 / 6.0,         0.5,              1.0,
                            1.0};
    V p = set1(c[0]);
    for (int i = 1; i < 13; ++i) p = fma(p, r, set1(c[i]));
    const __m128i ni = _mm256_cvtpd_epi32(n);
    const __m256i e = _mm256_slli_epi64(
        _mm256_add_epi64(_mm256_cvtepi32_epi64(ni), _mm256_set1_epi64x(1023)), 52);
    return mul(p, _mm256_castsi256_pd(e));
  }
};

template <class S>
typename S::T dot_avx(const typename S::T* a, const typename S::T* b, std::size_t n) {
  constexpr std::size_t W = S::W;
  auto a0 = S::zero(), a1 = S::zero(), a2 = S::zero(), a3 = S::zero();
  std::size_t i = 0;
  for (; i + 4 * W <= n; i += 4 * W) {
    a0 = S::fma(S::load(a + i), S::load(b + i), a0);
    a1 = S::fma(S::load(a + i + W), S::load(b + i + W), a1);
    a2 = S::fma(S::load(a + i + 2 * W), S::load(b + i + 2 * W), a2);
    a3 = S::fma(S::load(a + i + 3 * W), S::load(b + i + 3 * W), a3);
  }
  for (; i + W <= n; i += W) a0 = S::fma(S::load(a + i), S::load(b + i), a0);
  typename S::T acc = S::hsum(S::add(S::add(a0, a1), S::add(a2, a3)));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class S>
void axpy_avx(typename S::T alpha, const typename S::T* x, typename S::T* y, std::size_t n) {
  constexpr std::size_t W = S::W;
  const auto va = S::set1(alpha);
  std::size_t i = 0;
  for (; i + W <= n; i += W) S::store(y + i, S::fma(va, S::load(x + i), S::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// 4 rows x 2 vectors register tile, then single-row / single-vector cleanup.
template <class S>
void gemm_acc_avx(std::size_t M, std::size_t K, std::size_t N, const typename S::T* A,
                  std::size_t lda, const typename S::T* B, std::size_t ldb, typename S::T* C,
                  std::size_t ldc) {
  using T = typename S::T;
  using V = typename S::V;
  constexpr std::size_t W = S::W;
  std::size_t n0 = 0;
  for (; n0 + 2 * W <= N; n0 += 2 * W) {
    std::size_t m = 0;
    for (; m + 4 <= M; m += 4) {
      V c[4][2];
      for (int r = 0; r < 4; ++r) {
        c[r][0] = S::load(C + (m + r) * ldc + n0);
        c[r][1] = S::load(C + (m + r) * ldc + n0 + W);
      }
      for (std::size_t k = 0; k < K; ++k) {
        const V b0 = S::load(B + k * ldb + n0);
        const V b1 = S::load(B + k * ldb + n0 + W);
        for (int r = 0; r < 4; ++r) {
          const V a = S::set1(A[(m + r) * lda + k]);
          c[r][0] = S::fma(a, b0, c[r][0]);
          c[r][1] = S::fma(a, b1, c[r][1]);
        }
      }
      for (int r = 0; r < 4; ++r) {
        S::store(C + (m + r) * ldc + n0, c[r][0]);
        S::store(C + (m + r) * ldc + n0 + W, c[r][1]);
      }
    }
    for (; m < M; ++m) {
      V c0 = S::load(C + m * ldc + n0);
      V c1 = S::load(C + m * ldc + n0 + W);
      for (std::size_t k = 0; k < K; ++k) {
        const V a = S::set1(A[m * lda + k]);
        c0 = S::fma(a, S::load(B + k * ldb + n0), c0);
        c1 = S::fma(a, S::load(B + k * ldb + n0 + W), c1);
      }
      S::store(C + m * ldc + n0, c0);
      S::store(C + m * ldc + n0 + W, c1);
    }
  }
  for (; n0 + W <= N; n0 += W) {
    for (std::size_t m = 0; m < M; ++m) {
      V c0 = S::load(C + m * ldc + n0);
      for (std::size_t k = 0; k < K; ++k)
        c0 = S::fma(S::set1(A[m * lda + k]), S::load(B + k * ldb + n0), c0);
      S::store(C + m * ldc + n0, c0);
    }
  }
  if (n0 < N) {
    for (std::size_t m = 0; m < M; ++m) {
      T* c = C + m * ldc;
      for (std::size_t k = 0; k < K; ++k) {
        const T a = A[m * lda + k];
        const T* b = B + k * ldb;
        for (std::size_t n = n0; n < N; ++n) c[n] += a * b[n];
      }
    }
  }
}

// Each A row is streamed once against four B rows.
template <class S>
void gemm_abt_acc_avx(std::size_t M, std::size_t N, std::size_t K, const typename S::T* A,
                      std::size_t lda, const typename S::T* B, std::size_t ldb,
                      typename S::T* C, std::size_t ldc) {
  using T = typename S::T;
  using V = typename S::V;
  constexpr std::size_t W = S::W;
  for (std::size_t m = 0; m < M; ++m) {
    const T* a = A + m * lda;
    std::size_t n = 0;
    for (; n + 4 <= N; n += 4) {
      const T* b0 = B + n * ldb;
      const T* b1 = b0 + ldb;
      const T* b2 = b1 + ldb;
      const T* b3 = b2 + ldb;
      V s0 = S::zero(), s1 = S::zero(), s2 = S::zero(), s3 = S::zero();
      std::size_t k = 0;
      for (; k + W <= K; k += W) {
        const V va = S::load(a + k);
        s0 = S::fma(va, S::load(b0 + k), s0);
        s1 = S::fma(va, S::load(b1 + k), s1);
        s2 = S::fma(va, S::load(b2 + k), s2);
        s3 = S::fma(va, S::load(b3 + k), s3);
      }
      T r0 = S::hsum(s0), r1 = S::hsum(s1), r2 = S::hsum(s2), r3 = S::hsum(s3);
      for (; k < K; ++k) {
        r0 += a[k] * b0[k];
        r1 += a[k] * b1[k];
        r2 += a[k] * b2[k];
        r3 += a[k] * b3[k];
      }
      T* c = C + m * ldc + n;
      c[0] += r0;
      c[1] += r1;
      c[2] += r2;
      c[3] += r3;
    }
    for (; n < N; ++n) C[m * ldc + n] += dot_avx<S>(a, B + n * ldb, K);
  }
}

template <class S>
void gated_avx(const typename S::T* a, const typename S::T* b, typename S::T* tanh_out,
               typename S::T* sig_out, typename S::T* g, std::size_t n) {
  using T = typename S::T;
  constexpr std::size_t W = S::W;
  const auto one = S::set1(T(1));
  const auto two = S::set1(T(2));
  std::size_t i = 0;
  for (; i + W <= n; i += W) {
    // tanh(a) = 1 - 2 / (exp(2a) + 1); no cancellation issue at large |a|.
    const auto ea = S::exp(S::mul(two, S::load(a + i)));
    const auto th = S::sub(one, S::div(two, S::add(ea, one)));
    const auto sg = S::div(one, S::add(one, S::exp(S::sub(S::zero(), S::load(b + i)))));
    S::store(tanh_out + i, th);
    S::store(sig_out + i, sg);
    S::store(g + i, S::mul(th, sg));
  }
  for (; i < n; ++i) {
    const T th = std::tanh(a[i]);
    const T sg = T(1) / (T(1) + std::exp(-b[i]));
    tanh_out[i] = th;
    sig_out[i] = sg;
    g[i] = th * sg;
  }
}

template <class S>
constexpr KernelTable<typename S::T> make_table() {
  return KernelTable<typename S::T>{&dot_avx<S>, &axpy_avx<S>, &gemm_acc_avx<S>,
                                    &gemm_abt_acc_avx<S>, &gated_avx<S>};
}

constexpr KernelTable<float> kAvx2F32 = make_table<F32>();
constexpr KernelTable<double> kAvx2F64 = make_table<F64>();

}  // namespace

const KernelTable<float>* avx2_table_f32_impl() { return &kAvx2F32; }
const KernelTable<double>* avx2_table_f64_impl() { return &kAvx2F64; }

}  // namespace postdiff::kernels
