#pragma once

#include <cstddef>

namespace dsr::simd {

enum class Backend { scalar, avx2 };

// Backend chosen at startup: AVX2 when the CPU supports it, unless the
// DSR_BACKEND environment variable ("scalar" or "avx2") overrides.
Backend active_backend();
void force_backend(Backend b);
const char* backend_name(Backend b);
bool avx2_available();

// Accumulates Epanechnikov-weighted sums over rows j in [j0, j1) of a
// row-major target block with d columns:
//   u = (z[j] - query) * inv_h, w = 0.75 * (1 - u*u)
//   acc[c] += w * targets[j*d + c],  den += w
// Callers guarantee |u| <= 1 on the range, so weights are nonnegative.
using EpanRangeFn = void (*)(const double* z, const double* targets, std::size_t d,
                             std::size_t j0, std::size_t j1, double query,
                             double inv_h, double* acc, double* den);

void epan_range_scalar(const double* z, const double* targets, std::size_t d,
                       std::size_t j0, std::size_t j1, double query, double inv_h,
                       double* acc, double* den);

#if DSR_HAVE_AVX2
void epan_range_avx2(const double* z, const double* targets, std::size_t d,
                     std::size_t j0, std::size_t j1, double query, double inv_h,
                     double* acc, double* den);
#endif

EpanRangeFn epan_range();

}  // namespace dsr::simd
