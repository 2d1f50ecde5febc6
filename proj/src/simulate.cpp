#include "dsr/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "dsr/gbt.hpp"
#include "dsr/rng.hpp"

namespace dsr {

namespace {

constexpr double kPi = 3.14159265358979323846264338328;

std::vector<double> draw_uniform(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

IndexVector draw_quadrant_index(std::uint64_t seed, std::size_t p) {
  Rng rng = substream(seed, "param-xi");
  std::vector<double> v(p);
  for (double& x : v) x = std::fabs(rng.normal());
  return project_to_constraint(v);
}

// X = mu + A g with g standard normal, giving covariance A A'.
Matrix draw_gaussian_block(std::uint64_t seed, std::size_t n, std::size_t p) {
  Rng mu_rng = substream(seed, "param-mu");
  const std::vector<double> mu = draw_uniform(mu_rng, p, -1.0, 1.0);
  Rng a_rng = substream(seed, "param-amat");
  Matrix amat(p, p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) amat(i, j) = a_rng.uniform01();

  Rng x_rng = substream(seed, "covariates");
  Matrix x(n, p);
  std::vector<double> g(p);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : g) v = x_rng.normal();
    for (std::size_t r = 0; r < p; ++r)
      x(i, r) = mu[r] + dot(amat.row(r), g);
  }
  return x;
}

void finalize_sample(SimulatedSample& sample, const std::vector<double>& ybar,
                     std::uint64_t seed) {
  const std::size_t n = ybar.size();
  sample.dataset.soft_probs.resize(n);
  sample.dataset.hard_labels.resize(n);
  Rng label_rng = substream(seed, "labels");
  for (std::size_t i = 0; i < n; ++i) {
    sample.dataset.soft_probs[i] = sigmoid(ybar[i]);
    sample.dataset.hard_labels[i] =
        label_rng.uniform01() < sample.dataset.soft_probs[i] ? 1 : 0;
  }
  sample.dataset.feature_names.resize(sample.dataset.p());
  for (std::size_t j = 0; j < sample.dataset.p(); ++j)
    sample.dataset.feature_names[j] = "x" + std::to_string(j + 1);
}

}  // namespace

Scenario3Noise scenario3_noise(std::size_t n, std::uint64_t seed) {
  Scenario3Noise out;
  Rng x4_rng = substream(seed, "x4");
  out.x4 = draw_uniform(x4_rng, n, -1.0, 1.0);
  Rng e1_rng = substream(seed, "x1-noise");
  out.x1_noise = draw_uniform(e1_rng, n, -1.0, 1.0);
  Rng e2_rng = substream(seed, "x2-noise");
  out.x2_noise = draw_uniform(e2_rng, n, -0.5, 0.5);
  Rng e3_rng = substream(seed, "x3-noise");
  out.x3_noise = draw_uniform(e3_rng, n, -0.4, 0.4);
  Rng et_rng = substream(seed, "tau-noise");
  out.tau_noise = draw_uniform(et_rng, n, -0.6, 0.6);
  return out;
}

void scenario3_assemble(const Scenario3Noise& noise, Matrix& features,
                        std::vector<double>& tau) {
  const std::size_t n = noise.x4.size();
  features = Matrix(n, 4);
  tau.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x4 = noise.x4[i];
    const double x1 = std::sqrt(std::fabs(x4)) + noise.x1_noise[i];
    const double x2 = 0.5 * x1 + noise.x2_noise[i];
    const double x3 = 0.3 * x1 + 0.3 * x2 + noise.x3_noise[i];
    features(i, 0) = x1;
    features(i, 1) = x2;
    features(i, 2) = x3;
    features(i, 3) = x4;
    tau[i] = std::sin(x2 * x3) + noise.tau_noise[i];
  }
}

SimulatedSample generate_scenario(int scenario_id, std::size_t n,
                                  std::uint64_t seed) {
  if (scenario_id < 1 || scenario_id > 4)
    throw std::invalid_argument("scenario_id must be in 1..4");
  if (n < 2) throw std::invalid_argument("scenario needs n >= 2");

  const std::size_t p = scenario_id == 3 ? 4 : (scenario_id == 4 ? 20 : 8);
  SimulatedSample sample;
  sample.seed = seed;
  sample.truth.scenario_id = scenario_id;
  sample.truth.p = p;
  Rng beta_rng = substream(seed, "param-beta");
  sample.truth.beta_true = draw_uniform(beta_rng, p, -1.0, 1.0);
  sample.truth.xi_true = draw_quadrant_index(seed, p);

  std::vector<double>& tau = sample.dataset.treatment;
  Matrix& x = sample.dataset.features;

  if (scenario_id == 1 || scenario_id == 2) {
    x = draw_gaussian_block(seed, n, p);
    Rng tau_rng = substream(seed, "treatment");
    tau.resize(n);
    for (double& t : tau) t = tau_rng.normal();
  } else if (scenario_id == 3) {
    scenario3_assemble(scenario3_noise(n, seed), x, tau);
  } else {
    const Matrix cont = draw_gaussian_block(seed, n, 12);
    x = Matrix(n, 20);
    Rng p1_rng = substream(seed, "param-p1");
    const double p1 = p1_rng.uniform01();
    Rng chain_rng = substream(seed, "binary-chain");
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < 12; ++j) x(i, j) = cont(i, j);
      double prev = 0.0;
      for (std::size_t b = 0; b < 8; ++b) {
        const double prob = b == 0 ? p1 : sigmoid(0.5 * prev - 0.25);
        const double bit = chain_rng.uniform01() < prob ? 1.0 : 0.0;
        x(i, 12 + b) = bit;
        prev = bit;
      }
    }
    Rng tau_rng = substream(seed, "treatment");
    tau = draw_uniform(tau_rng, n, -1.0, 1.0);
  }

  std::vector<double> ybar(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double xb = dot(x.row(i), sample.truth.beta_true);
    const double z = dot(x.row(i), sample.truth.xi_true.coef) - tau[i];
    switch (scenario_id) {
      case 1: ybar[i] = xb + 3.0; break;
      case 2: ybar[i] = xb + z; break;
      case 3: ybar[i] = xb - 0.5 * std::log(std::fabs(z)); break;
      default: ybar[i] = xb - 1.2 * std::cos(kPi * z) * std::exp(-z * z); break;
    }
  }
  finalize_sample(sample, ybar, seed);
  return sample;
}

double true_g(const ScenarioTruth& truth, double u) {
  switch (truth.scenario_id) {
    case 1: return 3.0;
    case 2: return u;
    case 3:
      if (u == 0.0) throw NumericError("true link is singular at 0");
      return -0.5 * std::log(std::fabs(u));
    case 4: return -1.2 * std::cos(kPi * u) * std::exp(-u * u);
  }
  throw std::invalid_argument("scenario_id must be in 1..4");
}

namespace {

// Type-7 quantile (linear interpolation) of a sorted vector.
double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

double g_mse(const ModelFit& fit, const ScenarioTruth& truth,
             std::size_t grid_size) {
  if (grid_size < 2) throw std::invalid_argument("g_mse grid needs >= 2 points");
  if (fit.train_index.empty())
    throw std::invalid_argument("fit has no training index");
  std::vector<double> sorted = fit.train_index;
  std::sort(sorted.begin(), sorted.end());
  const double lo = quantile_sorted(sorted, 0.025);
  const double hi = quantile_sorted(sorted, 0.975);
  if (!(hi > lo)) throw NumericError("degenerate train_index range");

  const double step = (hi - lo) / static_cast<double>(grid_size - 1);
  double weighted = 0.0;
  double weight_total = 0.0;
  for (std::size_t k = 0; k < grid_size; ++k) {
    const double u = lo + step * static_cast<double>(k);
    if (truth.scenario_id == 3 && std::fabs(u) <= 0.05) continue;
    const double w = (k == 0 || k + 1 == grid_size) ? 0.5 * step : step;
    const double d = estimate_g(fit, u) - true_g(truth, u);
    weighted += w * d * d;
    weight_total += w;
  }
  if (!(weight_total > 0.0)) throw NumericError("empty link evaluation grid");
  return weighted / weight_total;
}

ConvergenceOutcome convergence_experiment(int scenario_id,
                                          std::span<const std::size_t> sizes,
                                          std::size_t reps,
                                          const FitConfig& config,
                                          const FitObserver& observer) {
  if (reps == 0) throw std::invalid_argument("reps must be at least 1");
  ConvergenceOutcome out;
  for (std::size_t si = 0; si < sizes.size(); ++si) {
    const std::size_t n = sizes[si];
    double sum = 0.0, sumsq = 0.0;
    std::size_t ok = 0;
    for (std::size_t rep = 0; rep < reps; ++rep) {
      const std::uint64_t cell = si * 1000003ull + rep;
      ConvergenceCell record;
      record.n = n;
      record.rep = rep;
      try {
        const SimulatedSample sample = generate_scenario(
            scenario_id, n, substream_seed(config.seed, "conv-data", cell));
        // The log-odds surface is unobservable in practice, so each cell
        // estimates from the binary outcomes: drop the generator's exact
        // probabilities and distill soft labels from a boosted expert.
        Dataset observed = sample.dataset;
        observed.soft_probs.clear();
        distill(observed, DistillSettings{}, config.prob_clip,
                substream_seed(config.seed, "conv-distill", cell));
        FitConfig cell_config = config;
        cell_config.seed = substream_seed(config.seed, "conv-fit", cell);
        const auto started = std::chrono::steady_clock::now();
        const ModelFit model = fit(observed, cell_config);
        record.runtime_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          started)
                .count();
        record.mse = g_mse(model, sample.truth, 200);
        if (observer) observer(n, rep, model);
        sum += record.mse;
        sumsq += record.mse * record.mse;
        ++ok;
      } catch (const std::exception& e) {
        record.failed = true;
        record.error = e.what();
      }
      out.cells.push_back(std::move(record));
    }
    ConvergenceRow row;
    row.n = n;
    row.reps_ok = ok;
    if (ok > 0) row.mean_mse = sum / static_cast<double>(ok);
    if (ok > 1) {
      const double var =
          (sumsq - sum * sum / static_cast<double>(ok)) / static_cast<double>(ok - 1);
      row.std_mse = std::sqrt(std::max(var, 0.0));
    }
    out.rows.push_back(row);
  }
  return out;
}

std::vector<std::size_t> bootstrap_indices(std::uint64_t seed, std::size_t r,
                                           std::size_t n) {
  Rng rng = substream(seed, "bootstrap", r);
  std::vector<std::size_t> idx(n);
  for (std::size_t& v : idx) v = rng.uniform_int(n);
  return idx;
}

namespace {

CoefficientInterval percentile_interval(std::vector<double>& draws,
                                        double estimate, double level) {
  std::sort(draws.begin(), draws.end());
  const double alpha = (1.0 - level) / 2.0;
  CoefficientInterval out;
  out.estimate = estimate;
  out.low = quantile_sorted(draws, alpha);
  out.high = quantile_sorted(draws, 1.0 - alpha);
  return out;
}

}  // namespace

BootstrapResult bootstrap_ci(const Dataset& dataset, const FitConfig& config,
                             std::size_t k, double level) {
  if (k < 2) throw std::invalid_argument("bootstrap needs k >= 2");
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("level must lie in (0, 1)");

  const ModelFit full = fit(dataset, config);
  const std::size_t n = dataset.n();
  const std::size_t p = dataset.p();

  std::vector<std::vector<double>> beta_draws(p), xi_draws(p);
  std::size_t failures = 0;
  for (std::size_t r = 0; r < k; ++r) {
    const std::vector<std::size_t> idx = bootstrap_indices(config.seed, r, n);
    Dataset resampled;
    resampled.features = Matrix(n, p);
    resampled.treatment.resize(n);
    resampled.soft_probs.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t src = idx[i];
      auto row = dataset.features.row(src);
      std::copy(row.begin(), row.end(), resampled.features.row(i).begin());
      resampled.treatment[i] = dataset.treatment[src];
      resampled.soft_probs[i] = dataset.soft_probs[src];
    }
    FitConfig refit_config = config;
    refit_config.seed = substream_seed(config.seed, "bootstrap-fit", r);
    try {
      const ModelFit refit = fit(resampled, refit_config);
      for (std::size_t j = 0; j < p; ++j) {
        beta_draws[j].push_back(refit.beta[j]);
        xi_draws[j].push_back(refit.xi.coef[j]);
      }
    } catch (const std::exception&) {
      ++failures;
      if (failures * 2 > k)
        throw NumericError("bootstrap: more than half of the refits failed");
    }
  }

  BootstrapResult out;
  out.failures = failures;
  out.beta.resize(p);
  out.xi.resize(p);
  for (std::size_t j = 0; j < p; ++j) {
    out.beta[j] = percentile_interval(beta_draws[j], full.beta[j], level);
    out.xi[j] = percentile_interval(xi_draws[j], full.xi.coef[j], level);
  }
  return out;
}

}  // namespace dsr
