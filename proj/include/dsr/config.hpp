#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dsr/model.hpp"

namespace dsr {

// Flat key = value text with # comments. Duplicate keys are an error.
using ConfigMap = std::map<std::string, std::string>;
ConfigMap parse_config_file(const std::filesystem::path& path);
ConfigMap parse_config_text(std::string_view text);

struct RunConfig {
  FitConfig fit;
  std::vector<double> h_grid = {0.15, 0.2, 0.25, 0.3, 0.35, 0.4};
  std::vector<double> lambda_grid = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  bool grids_given = false;  // cross-validation runs only when true
  std::size_t cv_folds = 5;
  double train_fraction = 0.9;
  std::string output_dir;
  void validate() const;
};

// Builds a RunConfig from a parsed map; unknown keys are an error so typos
// fail loudly. Experiment keys (scenario, sizes, reps, methods, budgets)
// are accepted and ignored here; their consumers read them directly.
RunConfig run_config_from(const ConfigMap& map);

struct CvCell {
  double h = 0.0;
  double lambda = 0.0;
  double mean_err = 0.0;
  std::vector<double> fold_errs;
};

struct CvResult {
  double best_h = 0.0;
  double best_lambda = 0.0;
  std::vector<CvCell> table;
  std::vector<std::string> warnings;
};

// Seeded k-fold grid search over (h, lambda), stratified on hard labels
// when present; scores held-out squared error of predicted log-odds and
// breaks ties toward the smaller h, then the smaller lambda.
CvResult cross_validate(const Dataset& dataset, const RunConfig& config);

// Helpers shared by the config and CLI layers.
double parse_double(const std::string& text, const std::string& what);
std::uint64_t parse_uint(const std::string& text, const std::string& what);
std::vector<double> parse_double_list(const std::string& text,
                                      const std::string& what);
std::vector<std::size_t> parse_size_list(const std::string& text,
                                         const std::string& what);

}  // namespace dsr
