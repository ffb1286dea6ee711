#pragma once

// Dense inner-loop primitives used by the denoiser, the FIR operator and the
// Gaussian oracles. Every routine has a portable scalar reference; an AVX2+FMA
// variant is selected at runtime when the CPU supports it.
//
// Matrices are row-major with explicit leading dimensions so that callers can
// pass shifted column windows (dilated convolution taps) without copies.

#include <cstddef>
#include <string_view>

namespace postdiff::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

/// Best instruction set supported by both this build and the running CPU.
Isa detected_isa();

/// Currently dispatched instruction set. Initialized from detected_isa(), or
/// from the POSTDIFF_ISA environment variable ("scalar" / "avx2") if set.
Isa active_isa();

/// Switches dispatch; throws std::invalid_argument if `isa` is unavailable.
void set_active_isa(Isa isa);

bool isa_available(Isa isa);

/// Restores the previous ISA on scope exit. Used by equivalence tests.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }
  ~ScopedIsa() { set_active_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

template <class T>
struct KernelTable {
  // sum_i a[i] * b[i]
  T (*dot)(const T* a, const T* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  // C[m, n] += sum_k A[m, k] * B[k, n]      (A: M x K, B: K x N, C: M x N)
  void (*gemm_acc)(std::size_t M, std::size_t K, std::size_t N, const T* A, std::size_t lda,
                   const T* B, std::size_t ldb, T* C, std::size_t ldc);
  // C[m, n] += sum_k A[m, k] * B[n, k]      (A: M x K, B: N x K, C: M x N)
  void (*gemm_abt_acc)(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda,
                       const T* B, std::size_t ldb, T* C, std::size_t ldc);
  // g = tanh(a) * sigmoid(b); also stores tanh(a) and sigmoid(b) for backprop.
  void (*gated_tanh_sigmoid)(const T* a, const T* b, T* tanh_out, T* sig_out, T* g,
                             std::size_t n);
};

const KernelTable<float>& table_f32();
const KernelTable<double>& table_f64();

template <class T>
const KernelTable<T>& table();
template <>
inline const KernelTable<float>& table<float>() { return table_f32(); }
template <>
inline const KernelTable<double>& table<double>() { return table_f64(); }

/// Fixed-ISA tables, for equivalence testing.
const KernelTable<float>& scalar_table_f32();
const KernelTable<double>& scalar_table_f64();
const KernelTable<float>* avx2_table_f32();   // nullptr when not built
const KernelTable<double>* avx2_table_f64();  // nullptr when not built

template <class T>
T dot(const T* a, const T* b, std::size_t n) { return table<T>().dot(a, b, n); }

template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n) { table<T>().axpy(alpha, x, y, n); }

template <class T>
void gemm_acc(std::size_t M, std::size_t K, std::size_t N, const T* A, std::size_t lda,
              const T* B, std::size_t ldb, T* C, std::size_t ldc) {
  table<T>().gemm_acc(M, K, N, A, lda, B, ldb, C, ldc);
}

template <class T>
void gemm_abt_acc(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda,
                  const T* B, std::size_t ldb, T* C, std::size_t ldc) {
  table<T>().gemm_abt_acc(M, N, K, A, lda, B, ldb, C, ldc);
}

template <class T>
void gated_tanh_sigmoid(const T* a, const T* b, T* tanh_out, T* sig_out, T* g, std::size_t n) {
  table<T>().gated_tanh_sigmoid(a, b, tanh_out, sig_out, g, n);
}

}  // namespace postdiff::kernels
