#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dsr/model.hpp"

namespace dsr {

// Closed-form generating truth for one simulated scenario:
//   1: g(u) = 3            2: g(u) = u
//   3: g(u) = -0.5 log|u|  4: g(u) = -1.2 cos(pi u) exp(-u^2)
struct ScenarioTruth {
  int scenario_id = 0;
  std::size_t p = 0;
  std::vector<double> beta_true;
  IndexVector xi_true;
};

struct SimulatedSample {
  Dataset dataset;
  ScenarioTruth truth;
  std::uint64_t seed = 0;
};

SimulatedSample generate_scenario(int scenario_id, std::size_t n,
                                  std::uint64_t seed);

// Scenario 3 noise columns, exposed so the confounding structure is
// testable: tau's noise stream is separate from every covariate stream.
struct Scenario3Noise {
  std::vector<double> x4;        // Unif(-1,1) draw, also the X4 column
  std::vector<double> x1_noise;  // Unif(-1,1)
  std::vector<double> x2_noise;  // Unif(-0.5,0.5)
  std::vector<double> x3_noise;  // Unif(-0.4,0.4)
  std::vector<double> tau_noise;  // Unif(-0.6,0.6)
};

Scenario3Noise scenario3_noise(std::size_t n, std::uint64_t seed);

// Assembles X1..X4 and tau from the noise columns:
//   X1 = sqrt|X4| + e1, X2 = 0.5 X1 + e2, X3 = 0.3 X1 + 0.3 X2 + e3,
//   tau = sin(X2 X3) + e_tau.
void scenario3_assemble(const Scenario3Noise& noise, Matrix& features,
                        std::vector<double>& tau);

double true_g(const ScenarioTruth& truth, double u);

// Mean squared deviation of the fitted link from the truth, by trapezoid
// quadrature over the central [2.5%, 97.5%] train_index range; scenario 3
// excludes a +-0.05 neighborhood of the log singularity at 0.
double g_mse(const ModelFit& fit, const ScenarioTruth& truth,
             std::size_t grid_size);

struct ConvergenceCell {
  std::size_t n = 0;
  std::size_t rep = 0;
  double mse = 0.0;
  double runtime_s = 0.0;
  bool failed = false;
  std::string error;
};

struct ConvergenceRow {
  std::size_t n = 0;
  double mean_mse = 0.0;
  double std_mse = 0.0;
  std::size_t reps_ok = 0;
};

struct ConvergenceOutcome {
  std::vector<ConvergenceCell> cells;
  std::vector<ConvergenceRow> rows;
};

// Called after each successful cell fit; used to export per-n heatmaps.
using FitObserver =
    std::function<void(std::size_t n, std::size_t rep, const ModelFit&)>;

ConvergenceOutcome convergence_experiment(int scenario_id,
                                          std::span<const std::size_t> sizes,
                                          std::size_t reps, const FitConfig& config,
                                          const FitObserver& observer = {});

struct CoefficientInterval {
  double estimate = 0.0;
  double low = 0.0;
  double high = 0.0;
};

struct BootstrapResult {
  std::vector<CoefficientInterval> beta;
  std::vector<CoefficientInterval> xi;
  std::size_t failures = 0;
};

// Row indices of bootstrap resample r, exposed for order-invariance tests.
std::vector<std::size_t> bootstrap_indices(std::uint64_t seed, std::size_t r,
                                           std::size_t n);

// Percentile intervals from k refits on resampled rows; the point estimate
// comes from the full-data fit. Aborts if more than k/2 refits fail.
BootstrapResult bootstrap_ci(const Dataset& dataset, const FitConfig& config,
                             std::size_t k, double level);

}  // namespace dsr
