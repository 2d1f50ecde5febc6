#include "dsr/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dsr/rng.hpp"

namespace dsr {

void SearchConfig::validate() const {
  if (dimension == 0) throw std::invalid_argument("search dimension must be positive");
  if (budget == 0) throw std::invalid_argument("search budget must be at least 1");
  if (de_population != 0 && de_population < 4)
    throw std::invalid_argument("de_population must be 0 (auto) or >= 4");
  if (!(de_weight > 0.0 && de_weight <= 2.0))
    throw std::invalid_argument("de_weight outside (0, 2]");
  if (!(de_crossover >= 0.0 && de_crossover <= 1.0))
    throw std::invalid_argument("de_crossover outside [0, 1]");
  if (!(tpe_gamma > 0.0 && tpe_gamma < 1.0))
    throw std::invalid_argument("tpe_gamma outside (0, 1)");
  if (tpe_startup == 0) throw std::invalid_argument("tpe_startup must be at least 1");
  if (tpe_candidates == 0)
    throw std::invalid_argument("tpe_candidates must be at least 1");
  if (!(tpe_bandwidth_floor > 0.0))
    throw std::invalid_argument("tpe_bandwidth_floor must be positive");
}

std::size_t SearchConfig::population() const {
  return de_population ? de_population : std::max<std::size_t>(15, 4 * dimension);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Projects, evaluates, and tracks best-so-far. Candidates that cannot be
// projected or score non-finite count against the budget as +inf.
class Evaluator {
 public:
  explicit Evaluator(const Objective& objective) : objective_(objective) {}

  double evaluate(std::span<const double> box_point) {
    double value = kInf;
    IndexVector projected;
    try {
      projected = project_to_constraint(box_point);
      value = objective_(projected.coef);
      if (std::isnan(value)) value = kInf;
    } catch (const InvalidCandidate&) {
      value = kInf;
    }
    ++count_;
    if (value < best_value_) {
      best_value_ = value;
      best_ = std::move(projected);
    }
    trace_.push_back({count_, best_value_});
    return value;
  }

  std::size_t count() const { return count_; }

  SearchResult finish() {
    SearchResult out;
    out.best_xi = std::move(best_);
    out.best_value = best_value_;
    out.evaluations = count_;
    out.trace = std::move(trace_);
    return out;
  }

 private:
  const Objective& objective_;
  IndexVector best_;
  double best_value_ = kInf;
  std::size_t count_ = 0;
  std::vector<TracePoint> trace_;
};

std::vector<double> uniform_box_point(Rng& rng, std::size_t p) {
  std::vector<double> v(p);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double clamp_box(double x) { return std::clamp(x, -1.0, 1.0); }

// Log density of an equal-weight Gaussian mixture with one component per
// center and a shared per-coordinate bandwidth, plus one box-wide component
// (center 0, sd 1). The wide component keeps the density bounded away from
// zero across the box, so the good/bad ratio stays informative in regions
// neither set has visited yet.
double log_kde(double t, const std::vector<double>& centers, double bw) {
  double den = std::exp(-0.5 * t * t);
  const double inv = 1.0 / bw;
  for (double c : centers) {
    const double u = (t - c) * inv;
    den += std::exp(-0.5 * u * u) * inv;
  }
  den *= 0.3989422804014326779399461 / static_cast<double>(centers.size() + 1);
  return std::log(std::max(den, 1e-300));
}

double quartile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Repeated proposals can pile up near one spot and drag a set's spread toward
// zero. If kernel widths were allowed to follow, the pile would turn into
// needles that look arbitrarily sharper in one mixture than the other and the
// density-ratio argmax would lock onto it, so widths are clipped below at one
// hundredth of the box width as well as at the configured floor. The clip also
// keeps proposal noise large enough to explore.
constexpr double kBandwidthClip = 2.0 / 100.0;

// Silverman's rule of thumb, 0.9 * min(sd, IQR/1.34) * n^(-1/5).
double silverman_bandwidth(std::vector<double> values, double floor) {
  const double sd = sample_sd(values);
  std::sort(values.begin(), values.end());
  const double iqr = quartile(values, 0.75) - quartile(values, 0.25);
  const double spread = std::min(sd, iqr / 1.34);
  const double bw =
      0.9 * spread * std::pow(static_cast<double>(values.size()), -0.2);
  return std::max({bw, floor, kBandwidthClip});
}

}  // namespace

SearchResult de_minimize(const Objective& objective, const SearchConfig& config) {
  config.validate();
  const std::size_t p = config.dimension;
  const std::size_t pop = config.population();
  Rng rng = substream(config.seed, "de");
  Evaluator eval(objective);

  std::vector<std::vector<double>> members(pop);
  std::vector<double> values(pop, kInf);
  for (std::size_t i = 0; i < pop && eval.count() < config.budget; ++i) {
    members[i] = uniform_box_point(rng, p);
    values[i] = eval.evaluate(members[i]);
  }

  std::vector<double> trial(p);
  while (eval.count() < config.budget) {
    for (std::size_t i = 0; i < pop && eval.count() < config.budget; ++i) {
      std::size_t r1, r2, r3;
      do r1 = rng.uniform_int(pop); while (r1 == i);
      do r2 = rng.uniform_int(pop); while (r2 == i || r2 == r1);
      do r3 = rng.uniform_int(pop); while (r3 == i || r3 == r1 || r3 == r2);
      const std::size_t j_rand = rng.uniform_int(p);
      for (std::size_t j = 0; j < p; ++j) {
        const double coin = rng.uniform01();
        if (coin < config.de_crossover || j == j_rand)
          trial[j] = clamp_box(members[r1][j] +
                               config.de_weight * (members[r2][j] - members[r3][j]));
        else
          trial[j] = members[i][j];
      }
      const double trial_value = eval.evaluate(trial);
      if (trial_value <= values[i]) {
        members[i] = trial;
        values[i] = trial_value;
      }
    }
  }
  return eval.finish();
}

SearchResult tpe_minimize(const Objective& objective, const SearchConfig& config) {
  config.validate();
  const std::size_t p = config.dimension;
  Rng startup_rng = substream(config.seed, "random");
  Rng model_rng = substream(config.seed, "tpe");
  Evaluator eval(objective);

  std::vector<std::vector<double>> history;
  std::vector<double> hist_values;
  auto record = [&](std::vector<double> point) {
    const double value = eval.evaluate(point);
    history.push_back(std::move(point));
    hist_values.push_back(value);
  };

  while (eval.count() < config.budget &&
         (eval.count() < config.tpe_startup || history.size() < 2))
    record(uniform_box_point(startup_rng, p));

  std::vector<std::size_t> order;
  std::vector<double> centers_good, centers_bad;
  while (eval.count() < config.budget) {
    const std::size_t m = history.size();
    order.resize(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return hist_values[a] < hist_values[b];
    });
    // Elite count grows with the square root of history and is capped, so the
    // good-set threshold keeps ratcheting down as improvements arrive instead
    // of settling at a fixed quantile of the proposal stream.
    const std::size_t n_good = std::min(
        {m - 1, std::size_t{25},
         std::max<std::size_t>(
             1, static_cast<std::size_t>(std::ceil(
                    config.tpe_gamma *
                    std::sqrt(static_cast<double>(m)))))});

    // Per-coordinate KDEs over the good and bad halves of history.
    std::vector<std::vector<double>> good(p), bad(p);
    std::vector<double> bw_good(p), bw_bad(p);
    for (std::size_t j = 0; j < p; ++j) {
      good[j].reserve(n_good);
      bad[j].reserve(m - n_good);
      for (std::size_t k = 0; k < m; ++k)
        (k < n_good ? good[j] : bad[j]).push_back(history[order[k]][j]);
      bw_good[j] = silverman_bandwidth(good[j], config.tpe_bandwidth_floor);
      bw_bad[j] = silverman_bandwidth(bad[j], config.tpe_bandwidth_floor);
    }

    std::vector<double> chosen;
    double chosen_score = -kInf;
    std::vector<double> cand(p);
    for (std::size_t c = 0; c < config.tpe_candidates; ++c) {
      double score = 0.0;
      for (std::size_t j = 0; j < p; ++j) {
        const std::size_t pick = model_rng.uniform_int(n_good + 1);
        const double center = pick < n_good ? good[j][pick] : 0.0;
        const double width = pick < n_good ? bw_good[j] : 1.0;
        cand[j] = clamp_box(center + width * model_rng.normal());
        score += log_kde(cand[j], good[j], bw_good[j]) -
                 log_kde(cand[j], bad[j], bw_bad[j]);
      }
      if (score > chosen_score) {
        chosen_score = score;
        chosen = cand;
      }
    }
    record(std::move(chosen));
  }
  return eval.finish();
}

SearchResult random_minimize(const Objective& objective,
                             const SearchConfig& config) {
  config.validate();
  Rng rng = substream(config.seed, "random");
  Evaluator eval(objective);
  while (eval.count() < config.budget)
    eval.evaluate(uniform_box_point(rng, config.dimension));
  return eval.finish();
}

SearchResult run_search(const Objective& objective, const SearchConfig& config) {
  switch (config.method) {
    case OptimizerKind::de: return de_minimize(objective, config);
    case OptimizerKind::tpe: return tpe_minimize(objective, config);
    case OptimizerKind::random: return random_minimize(objective, config);
  }
  throw std::invalid_argument("unknown search method");
}

}  // namespace dsr
