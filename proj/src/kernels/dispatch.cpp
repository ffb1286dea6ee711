#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "postdiff/kernels.hpp"

namespace postdiff::kernels {

#ifdef POSTDIFF_BUILD_AVX2
const KernelTable<float>* avx2_table_f32_impl();
const KernelTable<double>* avx2_table_f64_impl();
#endif

const KernelTable<float>* avx2_table_f32() {
#ifdef POSTDIFF_BUILD_AVX2
  return avx2_table_f32_impl();
#else
  return nullptr;
#endif
}

const KernelTable<double>* avx2_table_f64() {
#ifdef POSTDIFF_BUILD_AVX2
  return avx2_table_f64_impl();
#else
  return nullptr;
#endif
}

namespace {

bool cpu_has_avx2() {
#if defined(POSTDIFF_BUILD_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  if (const char* env = std::getenv("POSTDIFF_ISA")) {
    const std::string v(env);
    if (v == "scalar") return Isa::Scalar;
    if (v == "avx2" && cpu_has_avx2()) return Isa::Avx2;
  }
  return detected_isa();
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

Isa detected_isa() { return cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar; }

bool isa_available(Isa isa) { return isa == Isa::Scalar || cpu_has_avx2(); }

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_available(isa))
    throw std::invalid_argument("instruction set not available: " + std::string(isa_name(isa)));
  active().store(isa, std::memory_order_relaxed);
}

const KernelTable<float>& table_f32() {
  if (active_isa() == Isa::Avx2) return *avx2_table_f32();
  return scalar_table_f32();
}

const KernelTable<double>& table_f64() {
  if (active_isa() == Isa::Avx2) return *avx2_table_f64();
  return scalar_table_f64();
}

}  // namespace postdiff::kernels
