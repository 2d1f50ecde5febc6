#include "dsr/loo_backend.hpp"

#include <cstdlib>
#include <cstring>

namespace dsr::simd {

bool avx2_available() {
#if DSR_HAVE_AVX2
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

Backend initial_backend() {
  Backend b = avx2_available() ? Backend::avx2 : Backend::scalar;
  if (const char* env = std::getenv("DSR_BACKEND")) {
    if (std::strcmp(env, "scalar") == 0) b = Backend::scalar;
    if (std::strcmp(env, "avx2") == 0 && avx2_available()) b = Backend::avx2;
  }
  return b;
}

Backend g_backend = initial_backend();

}  // namespace

Backend active_backend() { return g_backend; }

void force_backend(Backend b) {
  if (b == Backend::avx2 && !avx2_available()) b = Backend::scalar;
  g_backend = b;
}

const char* backend_name(Backend b) {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

EpanRangeFn epan_range() {
#if DSR_HAVE_AVX2
  if (g_backend == Backend::avx2) return &epan_range_avx2;
#endif
  return &epan_range_scalar;
}

}  // namespace dsr::simd
