#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dsr/model.hpp"
#include "dsr/simulate.hpp"

namespace dsr {

struct BenchmarkRecord {
  OptimizerKind method = OptimizerKind::de;
  std::size_t n = 0;
  std::size_t rep = 0;
  double runtime_s = 0.0;  // fit wall clock only
  double objective = 0.0;
  double heatmap_mse = 0.0;
  bool failed = false;
  std::string error;
};

struct BenchmarkCell {
  OptimizerKind method = OptimizerKind::de;
  std::size_t n = 0;
  std::size_t reps_ok = 0;
  double runtime_mean = 0.0, runtime_sd = 0.0;
  double objective_mean = 0.0, objective_sd = 0.0;
  double mse_mean = 0.0, mse_sd = 0.0;
};

// One fit per (method, n, rep); every method sees the same generated data
// for a given (n, rep) so the comparison isolates the optimizer. Per-cell
// failures are recorded, not thrown.
std::vector<BenchmarkRecord> benchmark_optimizers(
    int scenario_id, std::span<const std::size_t> sizes, std::size_t reps,
    const std::map<OptimizerKind, FitConfig>& config_map, std::uint64_t seed);

std::vector<BenchmarkCell> summarize_benchmark(
    std::span<const BenchmarkRecord> records);

}  // namespace dsr
