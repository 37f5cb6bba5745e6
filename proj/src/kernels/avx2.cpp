#include <immintrin.h>

#include "courseqa/kernels.hpp"

namespace courseqa::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double squared_norm_avx2(const double* a, std::size_t n) { return dot_avx2(a, a, n); }

void dot_rows_avx2(const double* query, const double* rows, std::size_t n_rows, std::size_t dim,
                   double* out) {
  for (std::size_t r = 0; r < n_rows; ++r) out[r] = dot_avx2(query, rows + r * dim, dim);
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{Isa::avx2, &dot_avx2, &squared_norm_avx2, &dot_rows_avx2};
  return table;
}

}  // namespace courseqa::kernels
