#include "dsr/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "dsr/rng.hpp"
#include "dsr/smoothing.hpp"

namespace dsr {

namespace {

std::string trimmed(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

ConfigMap parse_config_text(std::string_view text) {
  ConfigMap map;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = trimmed(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw DataError("config line " + std::to_string(line_no) +
                      ": expected key = value");
    const std::string key = trimmed(stripped.substr(0, eq));
    const std::string value = trimmed(stripped.substr(eq + 1));
    if (key.empty())
      throw DataError("config line " + std::to_string(line_no) + ": empty key");
    if (!map.emplace(key, value).second)
      throw DataError("duplicate config key: " + key);
  }
  return map;
}

ConfigMap parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

double parse_double(const std::string& text, const std::string& what) {
  double value = 0.0;
  const auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw DataError("cannot parse " + what + ": '" + text + "'");
  return value;
}

std::uint64_t parse_uint(const std::string& text, const std::string& what) {
  std::uint64_t value = 0;
  const auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw DataError("cannot parse " + what + ": '" + text + "'");
  return value;
}

std::vector<double> parse_double_list(const std::string& text,
                                      const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(parse_double(trimmed(part), what));
  if (out.empty()) throw DataError(what + " list is empty");
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& text,
                                         const std::string& what) {
  std::vector<std::size_t> out;
  for (double v : parse_double_list(text, what)) {
    if (v < 1.0 || v != std::floor(v))
      throw DataError(what + " entries must be positive integers");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

void RunConfig::validate() const {
  fit.validate();
  if (h_grid.empty() || lambda_grid.empty())
    throw DataError("hyperparameter grids must be non-empty");
  for (double h : h_grid)
    if (!(h > 0.0)) throw DataError("h_grid entries must be positive");
  for (double l : lambda_grid)
    if (l < 0.0) throw DataError("lambda_grid entries must be nonnegative");
  if (cv_folds < 2) throw DataError("cv_folds must be at least 2");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw DataError("train_fraction must lie in (0, 1)");
}

RunConfig run_config_from(const ConfigMap& map) {
  static const std::set<std::string> known = {
      "bandwidth", "lasso_penalty", "kernel", "optimizer", "optimizer_budget",
      "seed", "prob_clip", "h_grid", "lambda_grid", "cv_folds",
      "train_fraction", "output_dir",
      // experiment keys, consumed by the CLI directly
      "scenario", "sizes", "reps", "methods", "de_budget", "tpe_budget",
      "random_budget", "grid_size", "smote_k", "expert_rounds", "expert_depth",
      "expert_learning_rate"};
  for (const auto& [key, value] : map)
    if (!known.count(key)) throw DataError("unknown config key: " + key);

  RunConfig config;
  const auto get = [&](const char* key) -> const std::string* {
    const auto it = map.find(key);
    return it == map.end() ? nullptr : &it->second;
  };
  if (const auto* v = get("bandwidth")) config.fit.bandwidth = parse_double(*v, "bandwidth");
  if (const auto* v = get("lasso_penalty"))
    config.fit.lasso_penalty = parse_double(*v, "lasso_penalty");
  if (const auto* v = get("kernel")) config.fit.kernel = kernel_from_name(*v);
  if (const auto* v = get("optimizer")) config.fit.optimizer = optimizer_from_name(*v);
  if (const auto* v = get("optimizer_budget"))
    config.fit.optimizer_budget =
        static_cast<std::size_t>(parse_uint(*v, "optimizer_budget"));
  if (const auto* v = get("seed")) config.fit.seed = parse_uint(*v, "seed");
  if (const auto* v = get("prob_clip")) config.fit.prob_clip = parse_double(*v, "prob_clip");
  if (const auto* v = get("h_grid")) {
    config.h_grid = parse_double_list(*v, "h_grid");
    config.grids_given = true;
  }
  if (const auto* v = get("lambda_grid")) {
    config.lambda_grid = parse_double_list(*v, "lambda_grid");
    config.grids_given = true;
  }
  if (const auto* v = get("cv_folds"))
    config.cv_folds = static_cast<std::size_t>(parse_uint(*v, "cv_folds"));
  if (const auto* v = get("train_fraction"))
    config.train_fraction = parse_double(*v, "train_fraction");
  if (const auto* v = get("output_dir")) config.output_dir = *v;
  config.validate();
  return config;
}

namespace {

// Seeded fold assignment, round-robin within each shuffled stratum.
std::vector<std::size_t> fold_assignment(const Dataset& dataset,
                                         std::size_t folds, std::uint64_t seed) {
  const std::size_t n = dataset.n();
  std::vector<std::vector<std::size_t>> strata;
  if (dataset.has_hard()) {
    strata.resize(2);
    for (std::size_t i = 0; i < n; ++i)
      strata[dataset.hard_labels[i]].push_back(i);
  } else {
    strata.resize(1);
    strata[0].resize(n);
    std::iota(strata[0].begin(), strata[0].end(), std::size_t{0});
  }
  Rng rng = substream(seed, "cv-folds");
  std::vector<std::size_t> fold_of(n, 0);
  std::size_t next_fold = 0;
  for (auto& stratum : strata) {
    for (std::size_t i = stratum.size(); i > 1; --i)
      std::swap(stratum[i - 1], stratum[rng.uniform_int(i)]);
    for (std::size_t idx : stratum) {
      fold_of[idx] = next_fold;
      next_fold = (next_fold + 1) % folds;
    }
  }
  return fold_of;
}

Dataset subset_rows(const Dataset& dataset, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.features = Matrix(rows.size(), dataset.p());
  out.treatment.resize(rows.size());
  if (dataset.has_soft()) out.soft_probs.resize(rows.size());
  if (dataset.has_hard()) out.hard_labels.resize(rows.size());
  out.feature_names = dataset.feature_names;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t src = rows[i];
    auto row = dataset.features.row(src);
    std::copy(row.begin(), row.end(), out.features.row(i).begin());
    out.treatment[i] = dataset.treatment[src];
    if (dataset.has_soft()) out.soft_probs[i] = dataset.soft_probs[src];
    if (dataset.has_hard()) out.hard_labels[i] = dataset.hard_labels[src];
  }
  return out;
}

}  // namespace

CvResult cross_validate(const Dataset& dataset, const RunConfig& config) {
  config.validate();
  dataset.validate();
  if (!dataset.has_soft()) throw DataError("cross-validation needs soft labels");

  std::vector<double> h_grid = config.h_grid;
  std::vector<double> lambda_grid = config.lambda_grid;
  std::sort(h_grid.begin(), h_grid.end());
  std::sort(lambda_grid.begin(), lambda_grid.end());

  const std::size_t folds = config.cv_folds;
  const std::vector<std::size_t> fold_of =
      fold_assignment(dataset, folds, config.fit.seed);

  std::vector<std::vector<std::size_t>> train_rows(folds), test_rows(folds);
  for (std::size_t i = 0; i < dataset.n(); ++i) {
    for (std::size_t f = 0; f < folds; ++f)
      (fold_of[i] == f ? test_rows[f] : train_rows[f]).push_back(i);
  }

  CvResult result;
  for (std::size_t f = 0; f < folds; ++f) {
    if (test_rows[f].empty())
      throw NumericError("cross-validation fold " + std::to_string(f) + " is empty");
    if (train_rows[f].size() < 2 * dataset.p())
      result.warnings.push_back("fold " + std::to_string(f) +
                                " trains on fewer than 2p rows");
  }

  double best_err = std::numeric_limits<double>::infinity();
  std::size_t cell_id = 0;
  for (double h : h_grid) {
    for (double lambda : lambda_grid) {
      CvCell cell;
      cell.h = h;
      cell.lambda = lambda;
      double total = 0.0;
      for (std::size_t f = 0; f < folds; ++f) {
        const Dataset train = subset_rows(dataset, train_rows[f]);
        const Dataset test = subset_rows(dataset, test_rows[f]);
        FitConfig fold_config = config.fit;
        fold_config.bandwidth = h;
        fold_config.lasso_penalty = lambda;
        fold_config.seed =
            substream_seed(config.fit.seed, "cv-fit", cell_id * folds + f);
        const ModelFit model = fit(train, fold_config);
        const std::vector<double> targets =
            log_odds_targets(test, fold_config.prob_clip);
        double err = 0.0;
        for (std::size_t i = 0; i < test.n(); ++i) {
          const Prediction pred =
              predict(model, test.features.row(i), test.treatment[i]);
          const double d = pred.log_odds - targets[i];
          err += d * d;
        }
        err /= static_cast<double>(test.n());
        cell.fold_errs.push_back(err);
        total += err;
      }
      cell.mean_err = total / static_cast<double>(folds);
      if (cell.mean_err < best_err) {
        best_err = cell.mean_err;
        result.best_h = h;
        result.best_lambda = lambda;
      }
      result.table.push_back(std::move(cell));
      ++cell_id;
    }
  }
  return result;
}

}  // namespace dsr
