#include "dsr/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "dsr/search.hpp"

namespace dsr {

void Dataset::validate() const {
  const std::size_t rows = n();
  if (rows < 2) throw std::invalid_argument("dataset needs at least two rows");
  if (p() == 0) throw std::invalid_argument("dataset has no feature columns");
  if (soft_probs.empty() && hard_labels.empty())
    throw std::invalid_argument("dataset needs soft_probs or hard_labels");
  if (treatment.size() != rows)
    throw std::invalid_argument("treatment length does not match row count");
  if (!soft_probs.empty() && soft_probs.size() != rows)
    throw std::invalid_argument("soft_probs length does not match row count");
  if (!hard_labels.empty() && hard_labels.size() != rows)
    throw std::invalid_argument("hard_labels length does not match row count");
  if (!feature_names.empty() && feature_names.size() != p())
    throw std::invalid_argument("feature_names length does not match columns");
  for (std::size_t i = 0; i < rows; ++i) {
    for (double v : features.row(i))
      if (!std::isfinite(v)) throw DataError("non-finite feature value");
    if (!std::isfinite(treatment[i])) throw DataError("non-finite treatment value");
    if (!soft_probs.empty()) {
      const double s = soft_probs[i];
      if (!std::isfinite(s) || s < 0.0 || s > 1.0)
        throw DataError("soft label outside [0,1]");
    }
    if (!hard_labels.empty() && hard_labels[i] > 1)
      throw DataError("hard label not in {0,1}");
  }
}

IndexVector project_to_constraint(std::span<const double> v) {
  if (v.empty()) throw InvalidCandidate("empty candidate vector");
  const double norm = l2_norm(v);
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw InvalidCandidate("candidate has no finite nonzero norm");
  IndexVector out;
  out.coef.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out.coef[i] = v[i] / norm;
  for (double c : out.coef) {
    if (c == 0.0) continue;
    if (c < 0.0)
      for (double& x : out.coef) x = -x;
    break;
  }
  return out;
}

OptimizerKind optimizer_from_name(std::string_view name) {
  if (name == "de") return OptimizerKind::de;
  if (name == "tpe") return OptimizerKind::tpe;
  if (name == "random") return OptimizerKind::random;
  throw std::invalid_argument("unknown optimizer: " + std::string(name));
}

const char* optimizer_name(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::de: return "de";
    case OptimizerKind::tpe: return "tpe";
    case OptimizerKind::random: return "random";
  }
  return "de";
}

void FitConfig::validate() const {
  if (!(bandwidth > 0.0)) throw std::invalid_argument("bandwidth must be positive");
  if (lasso_penalty < 0.0)
    throw std::invalid_argument("lasso_penalty must be nonnegative");
  if (optimizer_budget == 0)
    throw std::invalid_argument("optimizer_budget must be at least 1");
  if (!(prob_clip > 0.0 && prob_clip < 0.5))
    throw std::invalid_argument("prob_clip must lie in (0, 0.5)");
}

void ModelFit::build_link_smoother() {
  Matrix targets(link_residuals.size(), 1);
  for (std::size_t i = 0; i < link_residuals.size(); ++i)
    targets(i, 0) = link_residuals[i];
  link_smoother = std::make_shared<const SortedSmoother>(train_index, targets);
}

std::vector<double> log_odds_targets(const Dataset& dataset, double prob_clip) {
  if (!dataset.has_soft())
    throw DataError(
        "dataset has no soft labels; distill them from hard labels first");
  if (!(prob_clip > 0.0 && prob_clip < 0.5))
    throw std::invalid_argument("prob_clip must lie in (0, 0.5)");
  std::vector<double> out(dataset.n());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double p = std::clamp(dataset.soft_probs[i], prob_clip, 1.0 - prob_clip);
    out[i] = logit(p);
  }
  return out;
}

std::vector<double> index_values(const Dataset& dataset, const IndexVector& xi) {
  if (xi.coef.size() != dataset.p())
    throw std::invalid_argument("index dimension does not match features");
  std::vector<double> z(dataset.n());
  for (std::size_t i = 0; i < z.size(); ++i)
    z[i] = dot(dataset.features.row(i), xi.coef) - dataset.treatment[i];
  return z;
}

namespace {

// Minimum-norm solve of the (symmetric PSD) normal equations via an
// eigendecomposition; full-rank systems take the same path, deficient ones
// drop the null directions and set the flag.
Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& gram,
                                       const Eigen::VectorXd& rhs,
                                       bool* rank_deficient) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success)
    throw NumericError("eigendecomposition of the Gram matrix failed");
  const Eigen::VectorXd& vals = eig.eigenvalues();
  const double lmax = vals.cwiseAbs().maxCoeff();
  const double tol = std::max(lmax, 1.0) * static_cast<double>(gram.rows()) *
                     std::numeric_limits<double>::epsilon();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(vals.size());
  bool deficient = false;
  for (Eigen::Index k = 0; k < vals.size(); ++k) {
    if (vals[k] > tol)
      inv[k] = 1.0 / vals[k];
    else
      deficient = true;
  }
  if (rank_deficient) *rank_deficient = deficient;
  return eig.eigenvectors() *
         (inv.asDiagonal() * (eig.eigenvectors().transpose() * rhs));
}

}  // namespace

ProfileResult profile_beta(const Dataset& dataset, std::span<const double> targets,
                           const IndexVector& xi, double bandwidth,
                           KernelType kernel) {
  const std::size_t n = dataset.n();
  const std::size_t p = dataset.p();
  if (targets.size() != n)
    throw std::invalid_argument("targets length does not match row count");
  if (n < 2) throw std::invalid_argument("profiling needs at least two rows");

  std::vector<double> z = index_values(dataset, xi);
  const double sd = sample_sd(z);
  if (!(sd > 1e-12))
    throw NumericError("degenerate index: Z has no variation across rows");

  Matrix block(n, p + 1);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = dataset.features.row(i);
    double* dst = block.row(i).data();
    std::copy(row.begin(), row.end(), dst);
    dst[p] = targets[i];
  }

  SmoothDiag diag;
  ProfileResult result;
  result.index_sd = sd;
  result.loo_residuals =
      SortedSmoother(z, block).loo_residuals(bandwidth * sd, kernel, &diag);
  result.fallbacks = diag.fallback_count;

  using RowMajorMap =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                     Eigen::RowMajor>>;
  RowMajorMap resid(result.loo_residuals.data(), static_cast<Eigen::Index>(n),
                    static_cast<Eigen::Index>(p + 1));
  const auto ex = resid.leftCols(static_cast<Eigen::Index>(p));
  const auto ey = resid.col(static_cast<Eigen::Index>(p));

  const Eigen::MatrixXd gram = ex.transpose() * ex;
  const Eigen::VectorXd rhs = ex.transpose() * ey;
  const Eigen::VectorXd beta =
      solve_normal_equations(gram, rhs, &result.rank_deficient);

  result.beta.assign(beta.data(), beta.data() + p);
  result.residuals.resize(n);
  Eigen::Map<Eigen::VectorXd>(result.residuals.data(),
                              static_cast<Eigen::Index>(n)) = ey - ex * beta;
  return result;
}

double penalized_objective(const Dataset& dataset, std::span<const double> targets,
                           std::span<const double> xi_raw,
                           const FitConfig& config) {
  const IndexVector xi = project_to_constraint(xi_raw);
  const ProfileResult prof =
      profile_beta(dataset, targets, xi, config.bandwidth, config.kernel);
  double ss = 0.0;
  for (double r : prof.residuals) ss += r * r;
  return ss / static_cast<double>(dataset.n()) +
         config.lasso_penalty * l1_norm(xi.coef);
}

ModelFit fit(const Dataset& dataset, const FitConfig& config) {
  dataset.validate();
  config.validate();
  const std::vector<double> targets = log_odds_targets(dataset, config.prob_clip);

  const Objective objective = [&](std::span<const double> cand) -> double {
    try {
      return penalized_objective(dataset, targets, cand, config);
    } catch (const InvalidCandidate&) {
      return std::numeric_limits<double>::infinity();
    } catch (const NumericError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  SearchConfig search;
  search.dimension = dataset.p();
  search.budget = config.optimizer_budget;
  search.seed = config.seed;
  search.method = config.optimizer;
  const SearchResult found = run_search(objective, search);
  if (found.best_xi.coef.empty() || !std::isfinite(found.best_value))
    throw NumericError("optimizer found no evaluable index candidate");

  ModelFit out;
  out.xi = found.best_xi;
  out.bandwidth = config.bandwidth;
  out.kernel = config.kernel;
  out.lasso_penalty = config.lasso_penalty;

  ProfileResult prof;
  try {
    prof = profile_beta(dataset, targets, out.xi, config.bandwidth, config.kernel);
  } catch (const NumericError& e) {
    throw NumericError(std::string("final profiling failed: ") + e.what());
  }
  out.beta = prof.beta;
  out.index_scale = prof.index_sd;
  out.diagnostics.rank_deficient = prof.rank_deficient;
  out.diagnostics.smoothing_fallbacks = prof.fallbacks;

  double ss = 0.0;
  for (double r : prof.residuals) ss += r * r;
  out.objective_value = ss / static_cast<double>(dataset.n()) +
                        config.lasso_penalty * l1_norm(out.xi.coef);

  out.train_index = index_values(dataset, out.xi);
  out.link_residuals.resize(dataset.n());
  out.prognostic_min = std::numeric_limits<double>::infinity();
  out.prognostic_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < dataset.n(); ++i) {
    const double prog = dot(dataset.features.row(i), out.beta);
    out.link_residuals[i] = targets[i] - prog;
    out.prognostic_min = std::min(out.prognostic_min, prog);
    out.prognostic_max = std::max(out.prognostic_max, prog);
  }
  out.build_link_smoother();
  return out;
}

double estimate_g(const ModelFit& fit, double z) {
  if (!std::isfinite(z)) throw NumericError("non-finite link query");
  if (fit.train_index.empty()) throw std::invalid_argument("fit has no training index");
  const double h = fit.bandwidth * (fit.index_scale > 0.0 ? fit.index_scale : 1.0);
  if (fit.link_smoother) return fit.link_smoother->estimate(z, h, fit.kernel)[0];
  Matrix targets(fit.link_residuals.size(), 1);
  for (std::size_t i = 0; i < fit.link_residuals.size(); ++i)
    targets(i, 0) = fit.link_residuals[i];
  return SortedSmoother(fit.train_index, targets).estimate(z, h, fit.kernel)[0];
}

Prediction predict(const ModelFit& fit, std::span<const double> x, double tau) {
  const DualScores scores = dual_scores(fit, x);
  Prediction out;
  out.log_odds = scores.prognostic + estimate_g(fit, scores.interaction - tau);
  out.prob = sigmoid(out.log_odds);
  out.label = out.log_odds >= 0.0 ? 1 : 0;
  return out;
}

DualScores dual_scores(const ModelFit& fit, std::span<const double> x) {
  if (x.size() != fit.beta.size() || x.size() != fit.xi.coef.size())
    throw std::invalid_argument("subject dimension does not match fit");
  return {dot(x, fit.beta), dot(x, fit.xi.coef)};
}

TreatmentChoice optimal_treatment(const ModelFit& fit, std::span<const double> x,
                                  double tau_min, double tau_max,
                                  std::size_t grid_size) {
  if (!(tau_min < tau_max)) throw std::invalid_argument("tau range is empty");
  if (grid_size < 2) throw std::invalid_argument("treatment grid needs >= 2 points");
  const DualScores scores = dual_scores(fit, x);
  TreatmentChoice best;
  best.g_at_star = -std::numeric_limits<double>::infinity();
  const double step = (tau_max - tau_min) / static_cast<double>(grid_size - 1);
  for (std::size_t k = 0; k < grid_size; ++k) {
    const double tau = tau_min + step * static_cast<double>(k);
    const double g = estimate_g(fit, scores.interaction - tau);
    if (g > best.g_at_star) {
      best.g_at_star = g;
      best.tau_star = tau;
    }
  }
  return best;
}

namespace {

std::vector<double> linspace(double lo, double hi, std::size_t k) {
  std::vector<double> out(k);
  if (k == 1) {
    out[0] = lo;
    return out;
  }
  const double step = (hi - lo) / static_cast<double>(k - 1);
  for (std::size_t i = 0; i < k; ++i) out[i] = lo + step * static_cast<double>(i);
  return out;
}

}  // namespace

HeatmapGrid heatmap_grid(const ModelFit& fit,
                         std::pair<double, double> prognostic_range,
                         std::pair<double, double> index_arg_range,
                         std::pair<std::size_t, std::size_t> resolution) {
  if (resolution.first == 0 || resolution.second == 0)
    throw std::invalid_argument("heatmap resolution must be positive");
  if (!(prognostic_range.first <= prognostic_range.second) ||
      !(index_arg_range.first <= index_arg_range.second))
    throw std::invalid_argument("heatmap range is inverted");

  HeatmapGrid grid;
  grid.prognostic_axis =
      linspace(prognostic_range.first, prognostic_range.second, resolution.first);
  grid.index_axis =
      linspace(index_arg_range.first, index_arg_range.second, resolution.second);
  std::vector<double> g_vals(grid.index_axis.size());
  for (std::size_t j = 0; j < grid.index_axis.size(); ++j)
    g_vals[j] = estimate_g(fit, grid.index_axis[j]);
  grid.values = Matrix(grid.prognostic_axis.size(), grid.index_axis.size());
  for (std::size_t i = 0; i < grid.prognostic_axis.size(); ++i)
    for (std::size_t j = 0; j < grid.index_axis.size(); ++j)
      grid.values(i, j) = grid.prognostic_axis[i] + g_vals[j];
  return grid;
}

}  // namespace dsr
