#include "dsr/loo_backend.hpp"

namespace dsr::simd {

void epan_range_scalar(const double* z, const double* targets, std::size_t d,
                       std::size_t j0, std::size_t j1, double query, double inv_h,
                       double* acc, double* den) {
  double w_sum = *den;
  for (std::size_t j = j0; j < j1; ++j) {
    const double u = (z[j] - query) * inv_h;
    const double w = 0.75 * (1.0 - u * u);
    w_sum += w;
    const double* row = targets + j * d;
    for (std::size_t c = 0; c < d; ++c) acc[c] += w * row[c];
  }
  *den = w_sum;
}

}  // namespace dsr::simd
