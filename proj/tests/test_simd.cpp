#include <cmath>
#include <vector>

#include "aurum/error.hpp"
#include "aurum/rng.hpp"
#include "aurum/simd/kernels.hpp"
#include "doctest.h"

using namespace aurum;

namespace {

template <class T>
std::vector<T> random_vec(std::size_t n, Rng& rng) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  return v;
}

// Textbook triple loop, double accumulation.
template <class T>
std::vector<double> naive_gemm(std::size_t m, std::size_t n, std::size_t k, const std::vector<T>& a,
                               const std::vector<T>& b) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += static_cast<double>(a[i * k + p]) * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

struct Shape {
  std::size_t m, n, k;
};
const Shape kShapes[] = {{1, 1, 1}, {3, 5, 7}, {8, 8, 8}, {17, 33, 9}, {64, 96, 192}, {5, 1, 40}, {31, 15, 2}};

}  // namespace

TEST_CASE("scalar table is always present and named") {
  CHECK(simd::scalar_table().isa == simd::Isa::Scalar);
  CHECK(simd::isa_available(simd::Isa::Scalar));
  CHECK(simd::isa_name(simd::Isa::Avx2) == "avx2");
}

TEST_CASE("force_isa pins and reset restores dispatch") {
  simd::force_isa(simd::Isa::Scalar);
  CHECK(simd::active_isa() == simd::Isa::Scalar);
  simd::reset_isa();
  if (simd::isa_available(simd::Isa::Avx2)) {
    CHECK(simd::active_isa() == simd::Isa::Avx2);
  } else {
    CHECK_THROWS_AS(simd::force_isa(simd::Isa::Avx2), ParameterError);
  }
}

TEST_CASE("gemm kernels match the naive product") {
  Rng rng(11);
  std::vector<const simd::KernelTable*> tables{&simd::scalar_table()};
  if (simd::avx2_table()) tables.push_back(simd::avx2_table());
  for (const auto* table : tables) {
    CAPTURE(simd::isa_name(table->isa));
    for (const auto& s : kShapes) {
      CAPTURE(s.m);
      CAPTURE(s.n);
      CAPTURE(s.k);
      const auto a32 = random_vec<float>(s.m * s.k, rng);
      const auto b32 = random_vec<float>(s.k * s.n, rng);
      std::vector<float> c32(s.m * s.n, 0.5f);
      table->gemm_f32(s.m, s.n, s.k, 2.0f, a32.data(), s.k, b32.data(), s.n, c32.data(), s.n);
      const auto ref32 = naive_gemm(s.m, s.n, s.k, a32, b32);
      for (std::size_t i = 0; i < c32.size(); ++i) CHECK(c32[i] == doctest::Approx(0.5 + 2.0 * ref32[i]).epsilon(1e-5));

      const auto a64 = random_vec<double>(s.m * s.k, rng);
      const auto b64 = random_vec<double>(s.k * s.n, rng);
      std::vector<double> c64(s.m * s.n, 0.0);
      table->gemm_f64(s.m, s.n, s.k, 1.0, a64.data(), s.k, b64.data(), s.n, c64.data(), s.n);
      const auto ref64 = naive_gemm(s.m, s.n, s.k, a64, b64);
      for (std::size_t i = 0; i < c64.size(); ++i) CHECK(std::abs(c64[i] - ref64[i]) <= 1e-12 * (1.0 + std::abs(ref64[i])));
    }
  }
}

TEST_CASE("avx2 variants agree with the scalar reference") {
  const auto* avx = simd::avx2_table();
  if (!avx) {
    MESSAGE("AVX2 unavailable on this CPU; equivalence skipped");
    return;
  }
  const auto& ref = simd::scalar_table();
  Rng rng(5);

  SUBCASE("softmax rows") {
    for (std::size_t cols : {1u, 3u, 8u, 13u, 64u, 410u}) {
      auto x32 = random_vec<float>(7 * cols, rng);
      for (auto& v : x32) v *= 20.0f;
      auto y32 = x32;
      ref.softmax_rows_f32(x32.data(), 7, cols);
      avx->softmax_rows_f32(y32.data(), 7, cols);
      for (std::size_t i = 0; i < x32.size(); ++i) CHECK(y32[i] == doctest::Approx(x32[i]).epsilon(1e-5));

      auto x64 = random_vec<double>(5 * cols, rng);
      auto y64 = x64;
      ref.softmax_rows_f64(x64.data(), 5, cols);
      avx->softmax_rows_f64(y64.data(), 5, cols);
      for (std::size_t i = 0; i < x64.size(); ++i) CHECK(std::abs(y64[i] - x64[i]) <= 1e-12);
    }
  }
  SUBCASE("reductions") {
    for (std::size_t n : {0u, 1u, 7u, 8u, 9u, 31u, 1000u, 65536u}) {
      const auto x = random_vec<float>(n, rng);
      const auto y = random_vec<float>(n, rng);
      CHECK(avx->sum_f32(x.data(), n) == doctest::Approx(ref.sum_f32(x.data(), n)).epsilon(1e-12));
      CHECK(avx->dot_f32(x.data(), y.data(), n) == doctest::Approx(ref.dot_f32(x.data(), y.data(), n)).epsilon(1e-12));
      CHECK(avx->sum_sq_diff_f32(x.data(), y.data(), n) ==
            doctest::Approx(ref.sum_sq_diff_f32(x.data(), y.data(), n)).epsilon(1e-12));
    }
  }
}

TEST_CASE("gemm wrapper handles transposition and overwrite") {
  Rng rng(9);
  const std::size_t m = 6, n = 5, k = 4;
  const auto a = random_vec<double>(m * k, rng);  // m x k
  const auto b = random_vec<double>(k * n, rng);  // k x n
  std::vector<double> at(k * m), bt(n * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  const auto ref = naive_gemm(m, n, k, a, b);
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      std::vector<double> c(m * n, 99.0);
      simd::gemm(ta, tb, m, n, k, 1.0, ta ? at.data() : a.data(), tb ? bt.data() : b.data(), c.data(), false);
      for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}
