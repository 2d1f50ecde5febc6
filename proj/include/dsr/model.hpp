#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dsr/common.hpp"
#include "dsr/smoothing.hpp"

namespace dsr {

// Rows of covariates with a continuous treatment. soft_probs are the
// regression targets (log-odds are taken of them); hard_labels are kept for
// classification metrics and for distilling soft labels when they are absent.
struct Dataset {
  Matrix features;                        // n x p
  std::vector<double> treatment;          // n
  std::vector<double> soft_probs;         // n or empty
  std::vector<std::uint8_t> hard_labels;  // n or empty
  std::vector<std::string> feature_names;  // p or empty

  std::size_t n() const { return features.rows(); }
  std::size_t p() const { return features.cols(); }
  bool has_soft() const { return !soft_probs.empty(); }
  bool has_hard() const { return !hard_labels.empty(); }
  void validate() const;
};

// Unit-norm interaction index with the sign fixed so the first nonzero
// coordinate is positive; the model is identifiable only up to scale and
// sign, and this is the canonical representative.
struct IndexVector {
  std::vector<double> coef;
};

IndexVector project_to_constraint(std::span<const double> v);

enum class OptimizerKind { de, tpe, random };
OptimizerKind optimizer_from_name(std::string_view name);
const char* optimizer_name(OptimizerKind kind);

struct FitConfig {
  double bandwidth = 0.25;
  double lasso_penalty = 1e-4;
  KernelType kernel = KernelType::epanechnikov;
  OptimizerKind optimizer = OptimizerKind::de;
  std::size_t optimizer_budget = 200;
  std::uint64_t seed = 0;
  double prob_clip = 1e-6;  // soft labels clipped into [clip, 1-clip]
  void validate() const;
};

struct FitDiagnostics {
  std::size_t smoothing_fallbacks = 0;
  bool rank_deficient = false;
};

struct ModelFit {
  std::vector<double> beta;
  IndexVector xi;
  std::vector<double> train_index;      // X_i'xi - tau_i on training rows
  std::vector<double> link_residuals;   // Ybar_i - X_i'beta
  double bandwidth = 0.25;
  KernelType kernel = KernelType::epanechnikov;
  double lasso_penalty = 0.0;
  double index_scale = 1.0;             // sample sd of train_index
  double objective_value = 0.0;
  double prognostic_min = 0.0;          // observed X'beta range on training rows
  double prognostic_max = 0.0;
  FitDiagnostics diagnostics;

  // Query-time smoother over (train_index, link_residuals); built by fit
  // and by the deserializer, rebuilt on the fly when absent.
  std::shared_ptr<const SortedSmoother> link_smoother;
  void build_link_smoother();
};

// Clipped log-odds of the soft labels.
std::vector<double> log_odds_targets(const Dataset& dataset, double prob_clip);

std::vector<double> index_values(const Dataset& dataset, const IndexVector& xi);

// Profiled least squares at a fixed index: leave-one-out residualize the
// features and targets against Z = X'xi - tau, then regress the target
// residuals on the feature residuals. Smoothing distances are measured in
// units of the sample sd of Z so one bandwidth grid works across datasets.
struct ProfileResult {
  std::vector<double> beta;
  std::vector<double> residuals;  // e_y,i - e_x,i'beta
  Matrix loo_residuals;           // n x (p+1): feature block then target column
  double index_sd = 0.0;
  bool rank_deficient = false;
  std::size_t fallbacks = 0;
};

ProfileResult profile_beta(const Dataset& dataset, std::span<const double> targets,
                           const IndexVector& xi, double bandwidth,
                           KernelType kernel);

// Mean squared profiled residual plus the lasso term on the projected index.
double penalized_objective(const Dataset& dataset, std::span<const double> targets,
                           std::span<const double> xi_raw, const FitConfig& config);

ModelFit fit(const Dataset& dataset, const FitConfig& config);

// Nadaraya-Watson estimate of the link at a raw index value z.
double estimate_g(const ModelFit& fit, double z);

struct Prediction {
  double log_odds = 0.0;
  double prob = 0.0;
  std::uint8_t label = 0;  // 1 iff log_odds >= 0
};

Prediction predict(const ModelFit& fit, std::span<const double> x, double tau);

struct DualScores {
  double prognostic = 0.0;   // x'beta
  double interaction = 0.0;  // x'xi
};

DualScores dual_scores(const ModelFit& fit, std::span<const double> x);

struct TreatmentChoice {
  double tau_star = 0.0;
  double g_at_star = 0.0;
};

// Grid argmax of g((x'xi) - tau) over tau; lowest tau wins exact ties.
TreatmentChoice optimal_treatment(const ModelFit& fit, std::span<const double> x,
                                  double tau_min, double tau_max,
                                  std::size_t grid_size = 512);

struct HeatmapGrid {
  std::vector<double> prognostic_axis;
  std::vector<double> index_axis;
  Matrix values;  // rows follow the prognostic axis, cols the index axis
};

HeatmapGrid heatmap_grid(const ModelFit& fit,
                         std::pair<double, double> prognostic_range,
                         std::pair<double, double> index_arg_range,
                         std::pair<std::size_t, std::size_t> resolution);

}  // namespace dsr
