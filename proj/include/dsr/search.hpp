#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dsr/model.hpp"

namespace dsr {

struct SearchConfig {
  std::size_t dimension = 0;
  std::size_t budget = 200;  // total objective evaluations
  std::uint64_t seed = 0;
  OptimizerKind method = OptimizerKind::de;
  std::size_t de_population = 0;  // 0 means max(15, 4*dimension)
  double de_weight = 0.8;
  double de_crossover = 0.9;
  double tpe_gamma = 0.25;
  std::size_t tpe_startup = 24;
  std::size_t tpe_candidates = 24;
  double tpe_bandwidth_floor = 1e-3;
  void validate() const;
  std::size_t population() const;
};

struct TracePoint {
  std::size_t evaluation;  // 1-based count
  double best_value;
};

struct SearchResult {
  IndexVector best_xi;  // empty when no candidate evaluated finitely
  double best_value = 0.0;
  std::size_t evaluations = 0;
  std::vector<TracePoint> trace;
};

// Candidates are projected onto the constraint sphere before every call,
// so the objective always sees a unit vector with canonical sign.
using Objective = std::function<double(std::span<const double>)>;

// DE/rand/1/bin over the box [-1,1]^p.
SearchResult de_minimize(const Objective& objective, const SearchConfig& config);

// Sequential model-based search: random startup, then candidates drawn from
// a per-coordinate Gaussian KDE of the best gamma-fraction of history and
// ranked by the good/bad density ratio.
SearchResult tpe_minimize(const Objective& objective, const SearchConfig& config);

SearchResult random_minimize(const Objective& objective, const SearchConfig& config);

SearchResult run_search(const Objective& objective, const SearchConfig& config);

}  // namespace dsr
