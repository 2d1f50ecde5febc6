#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "dsr/common.hpp"

namespace dsr {

enum class KernelType { epanechnikov, gaussian };

double kernel_eval(KernelType kernel, double t);
KernelType kernel_from_name(std::string_view name);
const char* kernel_name(KernelType kernel);

struct SmoothDiag {
  std::size_t fallback_count = 0;
};

// Kernel smoother over a scalar index. Sorting once lets the compact
// Epanechnikov support turn each query into a contiguous window found by
// two monotone pointers; inside a window the sums are still direct, so
// results match an unsorted direct evaluation to rounding error.
class SortedSmoother {
 public:
  // z and targets rows are kept associated; targets is n x d.
  SortedSmoother(std::span<const double> z, const Matrix& targets);

  // Nadaraya-Watson estimate of each target column at a query point.
  // A window with no kernel mass falls back to the global column mean.
  std::vector<double> estimate(double query, double bandwidth, KernelType kernel,
                               SmoothDiag* diag = nullptr) const;

  // Leave-one-out residuals target_i - est_{-i}, in original row order.
  // A point with no neighbor mass falls back to the mean of the others.
  Matrix loo_residuals(double bandwidth, KernelType kernel,
                       SmoothDiag* diag = nullptr) const;

  std::size_t size() const { return z_.size(); }

 private:
  std::vector<double> z_;           // ascending
  Matrix targets_;                  // rows permuted alongside z_
  std::vector<std::uint32_t> order_;  // sorted position -> original row
  std::vector<double> col_sum_;
};

// One-shot conveniences over SortedSmoother.
std::vector<double> nw_estimate(std::span<const double> z, const Matrix& targets,
                                double query, double bandwidth, KernelType kernel,
                                SmoothDiag* diag = nullptr);

Matrix nw_residuals_loo(std::span<const double> z, const Matrix& targets,
                        double bandwidth, KernelType kernel,
                        SmoothDiag* diag = nullptr);

}  // namespace dsr
