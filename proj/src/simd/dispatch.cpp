#include <algorithm>
#include <atomic>
#include <string>
#include <vector>

#include "aurum/error.hpp"
#include "tables.hpp"

namespace aurum::simd {
namespace {

bool cpu_has_avx2() noexcept {
#if defined(AURUM_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* detect_best() noexcept {
  if (const KernelTable* t = avx2_table()) return t;
  return &detail::kScalarTable;
}

std::atomic<const KernelTable*> g_forced{nullptr};

template <class T>
void transpose(const T* src, std::size_t rows, std::size_t cols, std::vector<T>& dst) {
  dst.resize(rows * cols);
  constexpr std::size_t kBlock = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kBlock) {
    for (std::size_t c0 = 0; c0 < cols; c0 += kBlock) {
      const std::size_t r1 = std::min(rows, r0 + kBlock);
      const std::size_t c1 = std::min(cols, c0 + kBlock);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
      }
    }
  }
}

template <class T, class Kernel>
void gemm_impl(Kernel kernel, bool trans_a, bool trans_b, std::size_t m, std::size_t n,
               std::size_t k, T alpha, const T* a, const T* b, T* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  if (m == 0 || n == 0 || k == 0) return;
  thread_local std::vector<T> a_scratch;
  thread_local std::vector<T> b_scratch;
  if (trans_a) {
    transpose(a, k, m, a_scratch);
    a = a_scratch.data();
  }
  if (trans_b) {
    transpose(b, n, k, b_scratch);
    b = b_scratch.data();
  }
  kernel(m, n, k, alpha, a, k, b, n, c, n);
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

const KernelTable& scalar_table() noexcept { return detail::kScalarTable; }

const KernelTable* avx2_table() noexcept {
#if defined(AURUM_HAVE_AVX2_KERNELS)
  static const bool supported = cpu_has_avx2();
  return supported ? &detail::kAvx2Table : nullptr;
#else
  return nullptr;
#endif
}

bool isa_available(Isa isa) noexcept {
  return isa == Isa::Scalar || (isa == Isa::Avx2 && avx2_table() != nullptr);
}

const KernelTable& active() noexcept {
  if (const KernelTable* forced = g_forced.load(std::memory_order_acquire)) return *forced;
  static const KernelTable* best = detect_best();
  return *best;
}

Isa active_isa() noexcept { return active().isa; }

void force_isa(Isa isa) {
  if (!isa_available(isa)) {
    throw ParameterError("instruction set '" + std::string(isa_name(isa)) +
                         "' is not available on this CPU/build");
  }
  g_forced.store(isa == Isa::Scalar ? &detail::kScalarTable : avx2_table(),
                 std::memory_order_release);
}

void reset_isa() noexcept { g_forced.store(nullptr, std::memory_order_release); }

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, const float* b, float* c, bool accumulate) {
  gemm_impl<float>(active().gemm_f32, trans_a, trans_b, m, n, k, alpha, a, b, c, accumulate);
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, const double* b, double* c, bool accumulate) {
  gemm_impl<double>(active().gemm_f64, trans_a, trans_b, m, n, k, alpha, a, b, c, accumulate);
}

}  // namespace aurum::simd
