#include "dsr/loo_backend.hpp"

#if DSR_HAVE_AVX2

#include <immintrin.h>

namespace dsr::simd {

// Weights for four rows are computed in one vector, then each row's target
// columns are accumulated with that row's weight broadcast. Column-major
// vectorization keeps every load contiguous; only the weight lanes are
// reduced out of order, and those are nonnegative so the reduction is safe.
void epan_range_avx2(const double* z, const double* targets, std::size_t d,
                     std::size_t j0, std::size_t j1, double query, double inv_h,
                     double* acc, double* den) {
  const __m256d vq = _mm256_set1_pd(query);
  const __m256d vih = _mm256_set1_pd(inv_h);
  const __m256d vone = _mm256_set1_pd(1.0);
  const __m256d vc = _mm256_set1_pd(0.75);
  __m256d vden = _mm256_setzero_pd();

  std::size_t j = j0;
  alignas(32) double wbuf[4];
  for (; j + 4 <= j1; j += 4) {
    const __m256d vz = _mm256_loadu_pd(z + j);
    const __m256d u = _mm256_mul_pd(_mm256_sub_pd(vz, vq), vih);
    const __m256d w = _mm256_mul_pd(vc, _mm256_fnmadd_pd(u, u, vone));
    vden = _mm256_add_pd(vden, w);
    _mm256_store_pd(wbuf, w);
    for (int k = 0; k < 4; ++k) {
      const __m256d vw = _mm256_set1_pd(wbuf[k]);
      const double* row = targets + (j + static_cast<std::size_t>(k)) * d;
      std::size_t c = 0;
      for (; c + 4 <= d; c += 4) {
        const __m256d va = _mm256_loadu_pd(acc + c);
        const __m256d vt = _mm256_loadu_pd(row + c);
        _mm256_storeu_pd(acc + c, _mm256_fmadd_pd(vw, vt, va));
      }
      for (; c < d; ++c) acc[c] += wbuf[k] * row[c];
    }
  }

  alignas(32) double dbuf[4];
  _mm256_store_pd(dbuf, vden);
  double w_sum = *den + (dbuf[0] + dbuf[1]) + (dbuf[2] + dbuf[3]);

  for (; j < j1; ++j) {
    const double u = (z[j] - query) * inv_h;
    const double w = 0.75 * (1.0 - u * u);
    w_sum += w;
    const double* row = targets + j * d;
    for (std::size_t c = 0; c < d; ++c) acc[c] += w * row[c];
  }
  *den = w_sum;
}

}  // namespace dsr::simd

#endif
