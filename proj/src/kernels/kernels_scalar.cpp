#include <cmath>

#include "postdiff/kernels.hpp"

namespace postdiff::kernels {
namespace {

template <class T>
T dot_scalar(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
void axpy_scalar(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void gemm_acc_scalar(std::size_t M, std::size_t K, std::size_t N, const T* A, std::size_t lda,
                     const T* B, std::size_t ldb, T* C, std::size_t ldc) {
  for (std::size_t m = 0; m < M; ++m) {
    T* c = C + m * ldc;
    for (std::size_t k = 0; k < K; ++k) {
      const T a = A[m * lda + k];
      const T* b = B + k * ldb;
      for (std::size_t n = 0; n < N; ++n) c[n] += a * b[n];
    }
  }
}

template <class T>
void gemm_abt_acc_scalar(std::size_t M, std::size_t N, std::size_t K, const T* A,
                         std::size_t lda, const T* B, std::size_t ldb, T* C, std::size_t ldc) {
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t n = 0; n < N; ++n)
      C[m * ldc + n] += dot_scalar(A + m * lda, B + n * ldb, K);
}

template <class T>
void gated_scalar(const T* a, const T* b, T* tanh_out, T* sig_out, T* g, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const T th = std::tanh(a[i]);
    const T sg = T(1) / (T(1) + std::exp(-b[i]));
    tanh_out[i] = th;
    sig_out[i] = sg;
    g[i] = th * sg;
  }
}

template <class T>
constexpr KernelTable<T> make_table() {
  return KernelTable<T>{&dot_scalar<T>, &axpy_scalar<T>, &gemm_acc_scalar<T>,
                        &gemm_abt_acc_scalar<T>, &gated_scalar<T>};
}

constexpr KernelTable<float> kScalarF32 = make_table<float>();
constexpr KernelTable<double> kScalarF64 = make_table<double>();

}  // namespace

const KernelTable<float>& scalar_table_f32() { return kScalarF32; }
const KernelTable<double>& scalar_table_f64() { return kScalarF64; }

}  // namespace postdiff::kernels
