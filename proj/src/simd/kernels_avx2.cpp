#include <cmath>
#include <immintrin.h>

#include "zett/simd/kernels.hpp"

namespace zett::simd {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double alpha, double* x, std::size_t n) {
  __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= alpha;
}

double sum_squares(const double* x, std::size_t n) { return dot(x, x, n); }

// 4x8 register tile: eight accumulators, two B loads and four broadcasts
// per k step.
void tile_4x8(const double* a, const double* b, double* c, std::size_t k, std::size_t n, bool accumulate) {
  __m256d c00, c01, c10, c11, c20, c21, c30, c31;
  if (accumulate) {
    c00 = _mm256_loadu_pd(c);
    c01 = _mm256_loadu_pd(c + 4);
    c10 = _mm256_loadu_pd(c + n);
    c11 = _mm256_loadu_pd(c + n + 4);
    c20 = _mm256_loadu_pd(c + 2 * n);
    c21 = _mm256_loadu_pd(c + 2 * n + 4);
    c30 = _mm256_loadu_pd(c + 3 * n);
    c31 = _mm256_loadu_pd(c + 3 * n + 4);
  } else {
    c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = _mm256_setzero_pd();
  }
  for (std::size_t p = 0; p < k; ++p) {
    __m256d b0 = _mm256_loadu_pd(b + p * n);
    __m256d b1 = _mm256_loadu_pd(b + p * n + 4);
    __m256d a0 = _mm256_broadcast_sd(a + p);
    __m256d a1 = _mm256_broadcast_sd(a + k + p);
    __m256d a2 = _mm256_broadcast_sd(a + 2 * k + p);
    __m256d a3 = _mm256_broadcast_sd(a + 3 * k + p);
    c00 = _mm256_fmadd_pd(a0, b0, c00);
    c01 = _mm256_fmadd_pd(a0, b1, c01);
    c10 = _mm256_fmadd_pd(a1, b0, c10);
    c11 = _mm256_fmadd_pd(a1, b1, c11);
    c20 = _mm256_fmadd_pd(a2, b0, c20);
    c21 = _mm256_fmadd_pd(a2, b1, c21);
    c30 = _mm256_fmadd_pd(a3, b0, c30);
    c31 = _mm256_fmadd_pd(a3, b1, c31);
  }
  _mm256_storeu_pd(c, c00);
  _mm256_storeu_pd(c + 4, c01);
  _mm256_storeu_pd(c + n, c10);
  _mm256_storeu_pd(c + n + 4, c11);
  _mm256_storeu_pd(c + 2 * n, c20);
  _mm256_storeu_pd(c + 2 * n + 4, c21);
  _mm256_storeu_pd(c + 3 * n, c30);
  _mm256_storeu_pd(c + 3 * n + 4, c31);
}

// One row of C against columns [j0, n) with 4-wide vectors and a scalar tail.
void row_tail(const double* arow, const double* b, double* crow, std::size_t k, std::size_t n, std::size_t j0,
              bool accumulate) {
  std::size_t j = j0;
  for (; j + 4 <= n; j += 4) {
    __m256d acc = accumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
    for (std::size_t p = 0; p < k; ++p)
      acc = _mm256_fmadd_pd(_mm256_broadcast_sd(arow + p), _mm256_loadu_pd(b + p * n + j), acc);
    _mm256_storeu_pd(crow + j, acc);
  }
  for (; j < n; ++j) {
    double acc = accumulate ? crow[j] : 0.0;
    for (std::size_t p = 0; p < k; ++p) acc = std::fma(arow[p], b[p * n + j], acc);
    crow[j] = acc;
  }
}

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
          bool accumulate) {
  std::size_t full_cols = n / 8 * 8;
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    for (std::size_t j = 0; j < full_cols; j += 8) tile_4x8(a + i * k, b + j, c + i * n + j, k, n, accumulate);
    if (full_cols < n)
      for (std::size_t r = 0; r < 4; ++r) row_tail(a + (i + r) * k, b, c + (i + r) * n, k, n, full_cols, accumulate);
  }
  for (; i < m; ++i) row_tail(a + i * k, b, c + i * n, k, n, 0, accumulate);
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{dot, axpy, scale, sum_squares, gemm};
  return &table;
}

}  // namespace zett::simd
