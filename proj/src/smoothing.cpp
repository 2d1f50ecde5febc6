#include "dsr/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dsr/loo_backend.hpp"

namespace dsr {

namespace {
constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;
}

double kernel_eval(KernelType kernel, double t) {
  if (!std::isfinite(t)) throw std::invalid_argument("non-finite kernel argument");
  switch (kernel) {
    case KernelType::epanechnikov:
      return std::fabs(t) <= 1.0 ? 0.75 * (1.0 - t * t) : 0.0;
    case KernelType::gaussian:
      return kInvSqrt2Pi * std::exp(-0.5 * t * t);
  }
  return 0.0;
}

KernelType kernel_from_name(std::string_view name) {
  if (name == "epanechnikov") return KernelType::epanechnikov;
  if (name == "gaussian") return KernelType::gaussian;
  throw std::invalid_argument("unknown kernel: " + std::string(name));
}

const char* kernel_name(KernelType kernel) {
  return kernel == KernelType::epanechnikov ? "epanechnikov" : "gaussian";
}

SortedSmoother::SortedSmoother(std::span<const double> z, const Matrix& targets) {
  const std::size_t n = z.size();
  if (n == 0) throw std::invalid_argument("smoother needs at least one point");
  if (targets.rows() != n)
    throw std::invalid_argument("z and targets row counts differ");
  for (double v : z)
    if (!std::isfinite(v)) throw NumericError("non-finite index value");
  for (std::size_t i = 0; i < n; ++i)
    for (double v : targets.row(i))
      if (!std::isfinite(v)) throw NumericError("non-finite target value");

  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  std::stable_sort(perm.begin(), perm.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return z[a] < z[b]; });

  const std::size_t d = targets.cols();
  z_.resize(n);
  targets_ = Matrix(n, d);
  order_ = std::move(perm);
  col_sum_.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t src = order_[i];
    z_[i] = z[src];
    for (std::size_t c = 0; c < d; ++c) {
      const double v = targets(src, c);
      targets_(i, c) = v;
      col_sum_[c] += v;
    }
  }
}

std::vector<double> SortedSmoother::estimate(double query, double bandwidth,
                                             KernelType kernel,
                                             SmoothDiag* diag) const {
  if (!(bandwidth > 0.0)) throw std::invalid_argument("bandwidth must be positive");
  if (!std::isfinite(query)) throw NumericError("non-finite query point");
  const std::size_t n = z_.size();
  const std::size_t d = targets_.cols();
  std::vector<double> acc(d, 0.0);
  double den = 0.0;

  if (kernel == KernelType::epanechnikov) {
    const auto lo_it = std::lower_bound(z_.begin(), z_.end(), query - bandwidth);
    const auto hi_it = std::upper_bound(lo_it, z_.end(), query + bandwidth);
    const auto lo = static_cast<std::size_t>(lo_it - z_.begin());
    const auto hi = static_cast<std::size_t>(hi_it - z_.begin());
    simd::epan_range()(z_.data(), targets_.data(), d, lo, hi, query,
                       1.0 / bandwidth, acc.data(), &den);
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      const double w = kernel_eval(kernel, (z_[j] - query) / bandwidth);
      den += w;
      for (std::size_t c = 0; c < d; ++c) acc[c] += w * targets_(j, c);
    }
  }

  if (!(den > 0.0)) {
    if (diag) ++diag->fallback_count;
    for (std::size_t c = 0; c < d; ++c)
      acc[c] = col_sum_[c] / static_cast<double>(n);
    return acc;
  }
  for (std::size_t c = 0; c < d; ++c) acc[c] /= den;
  return acc;
}

Matrix SortedSmoother::loo_residuals(double bandwidth, KernelType kernel,
                                     SmoothDiag* diag) const {
  if (!(bandwidth > 0.0)) throw std::invalid_argument("bandwidth must be positive");
  const std::size_t n = z_.size();
  if (n < 2) throw std::invalid_argument("leave-one-out needs at least two points");
  const std::size_t d = targets_.cols();
  Matrix out(n, d);
  std::vector<double> acc(d);

  const bool epan = kernel == KernelType::epanechnikov;
  const double inv_h = 1.0 / bandwidth;
  const auto fn = simd::epan_range();
  std::size_t lo = 0, hi = 0;

  for (std::size_t i = 0; i < n; ++i) {
    const double zi = z_[i];
    std::fill(acc.begin(), acc.end(), 0.0);
    double den = 0.0;
    std::size_t count = 0;

    if (epan) {
      while (z_[lo] < zi - bandwidth) ++lo;
      while (hi < n && z_[hi] <= zi + bandwidth) ++hi;
      fn(z_.data(), targets_.data(), d, lo, i, zi, inv_h, acc.data(), &den);
      fn(z_.data(), targets_.data(), d, i + 1, hi, zi, inv_h, acc.data(), &den);
      count = hi - lo - 1;
    } else {
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double w = kernel_eval(kernel, (z_[j] - zi) * inv_h);
        den += w;
        for (std::size_t c = 0; c < d; ++c) acc[c] += w * targets_(j, c);
      }
      count = n - 1;
    }

    const std::uint32_t orig = order_[i];
    if (count == 0 || !(den > 0.0)) {
      if (diag) ++diag->fallback_count;
      for (std::size_t c = 0; c < d; ++c) {
        const double rest =
            (col_sum_[c] - targets_(i, c)) / static_cast<double>(n - 1);
        out(orig, c) = targets_(i, c) - rest;
      }
    } else {
      for (std::size_t c = 0; c < d; ++c)
        out(orig, c) = targets_(i, c) - acc[c] / den;
    }
  }
  return out;
}

std::vector<double> nw_estimate(std::span<const double> z, const Matrix& targets,
                                double query, double bandwidth, KernelType kernel,
                                SmoothDiag* diag) {
  return SortedSmoother(z, targets).estimate(query, bandwidth, kernel, diag);
}

Matrix nw_residuals_loo(std::span<const double> z, const Matrix& targets,
                        double bandwidth, KernelType kernel, SmoothDiag* diag) {
  return SortedSmoother(z, targets).loo_residuals(bandwidth, kernel, diag);
}

}  // namespace dsr
