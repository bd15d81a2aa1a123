#pragma once

#include <cstddef>
#include <string_view>

namespace aurum::simd {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa) noexcept;

/// Inner loops with one portable reference implementation and optional
/// vector variants. Every variant must agree with the scalar table to the
/// tolerances asserted in tests/test_simd.cpp.
///
/// All matrices are row-major with explicit leading dimensions.
struct KernelTable {
  Isa isa;

  /// C[m x n] += alpha * A[m x k] * B[k x n]
  void (*gemm_f32)(std::size_t m, std::size_t n, std::size_t k, float alpha, const float* a,
                   std::size_t lda, const float* b, std::size_t ldb, float* c, std::size_t ldc);
  void (*gemm_f64)(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* a,
                   std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc);

  /// Row-wise softmax in place; row sums accumulate in double.
  void (*softmax_rows_f32)(float* x, std::size_t rows, std::size_t cols);
  void (*softmax_rows_f64)(double* x, std::size_t rows, std::size_t cols);

  // Reductions over f32 data with f64 accumulation.
  double (*sum_f32)(const float* x, std::size_t n);
  double (*dot_f32)(const float* x, const float* y, std::size_t n);
  double (*sum_sq_diff_f32)(const float* x, const float* y, std::size_t n);
};

const KernelTable& scalar_table() noexcept;
/// Null when the build has no AVX2 variant or the running CPU lacks AVX2+FMA.
const KernelTable* avx2_table() noexcept;

bool isa_available(Isa isa) noexcept;
/// Best available table unless overridden by `force_isa`.
const KernelTable& active() noexcept;
Isa active_isa() noexcept;
/// Pins dispatch to `isa`; throws ParameterError if it is unavailable.
void force_isa(Isa isa);
/// Restores automatic selection.
void reset_isa() noexcept;

/// C[m x n] (+)= alpha * op(A) * op(B) where op is optional transposition.
/// A is stored m x k (or k x m when trans_a), B is k x n (or n x k when
/// trans_b). When `accumulate` is false C is overwritten.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, const float* b, float* c, bool accumulate);
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, const double* b, double* c, bool accumulate);

inline void softmax_rows(float* x, std::size_t rows, std::size_t cols) {
  active().softmax_rows_f32(x, rows, cols);
}
inline void softmax_rows(double* x, std::size_t rows, std::size_t cols) {
  active().softmax_rows_f64(x, rows, cols);
}

}  // namespace aurum::simd
