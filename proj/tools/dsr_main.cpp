#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsr/bench.hpp"
#include "dsr/config.hpp"
#include "dsr/gbt.hpp"
#include "dsr/model.hpp"
#include "dsr/rng.hpp"
#include "dsr/serialize.hpp"
#include "dsr/simulate.hpp"
#include "dsr/tableio.hpp"

namespace fs = std::filesystem;
using namespace dsr;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) parts.push_back(part);
  return parts;
}

std::pair<double, double> parse_range(const std::string& text,
                                      const std::string& what) {
  const std::vector<double> vals = parse_double_list(text, what);
  if (vals.size() != 2 || !(vals[0] < vals[1]))
    throw DataError(what + " must be LO,HI with LO < HI");
  return {vals[0], vals[1]};
}

double type7_quantile(std::vector<double> sorted_copy, double q) {
  std::sort(sorted_copy.begin(), sorted_copy.end());
  const double pos = q * static_cast<double>(sorted_copy.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted_copy.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted_copy[lo] + frac * (sorted_copy[hi] - sorted_copy[lo]);
}

Dataset take_rows(const Dataset& src, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.features = Matrix(rows.size(), src.p());
  out.treatment.resize(rows.size());
  if (src.has_soft()) out.soft_probs.resize(rows.size());
  if (src.has_hard()) out.hard_labels.resize(rows.size());
  out.feature_names = src.feature_names;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    std::copy(src.features.row(r).begin(), src.features.row(r).end(),
              out.features.row(i).begin());
    out.treatment[i] = src.treatment[r];
    if (src.has_soft()) out.soft_probs[i] = src.soft_probs[r];
    if (src.has_hard()) out.hard_labels[i] = src.hard_labels[r];
  }
  return out;
}

// Seeded train/holdout split, stratified on hard labels when present. Row
// order within each part stays ascending so outputs are stable.
void split_train_holdout(const Dataset& data, double train_fraction,
                         std::uint64_t seed, std::vector<std::size_t>& train,
                         std::vector<std::size_t>& holdout) {
  std::vector<std::vector<std::size_t>> strata;
  if (data.has_hard()) {
    strata.resize(2);
    for (std::size_t i = 0; i < data.n(); ++i)
      strata[data.hard_labels[i]].push_back(i);
  } else {
    strata.resize(1);
    for (std::size_t i = 0; i < data.n(); ++i) strata[0].push_back(i);
  }
  Rng rng = substream(seed, "holdout");
  for (std::vector<std::size_t>& stratum : strata) {
    for (std::size_t i = stratum.size(); i > 1; --i)
      std::swap(stratum[i - 1], stratum[rng.uniform_int(i)]);
    std::size_t keep = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(stratum.size())));
    keep = std::clamp<std::size_t>(keep, stratum.empty() ? 0 : 1,
                                   stratum.size());
    for (std::size_t i = 0; i < stratum.size(); ++i)
      (i < keep ? train : holdout).push_back(stratum[i]);
  }
  std::sort(train.begin(), train.end());
  std::sort(holdout.begin(), holdout.end());
}

Dataset load_fit_data(const std::string& data_path,
                      const std::string& schema_path, const fs::path& out_dir,
                      std::vector<std::string>& notes) {
  if (schema_path.empty()) return read_dataset_csv(data_path);
  const SchemaSpec schema = load_schema(schema_path);
  const TypedTable table = load_csv(data_path, schema);
  if (table.dropped_rows > 0)
    notes.push_back("dropped " + std::to_string(table.dropped_rows) +
                    " rows with missing values");
  auto [dataset, record] = preprocess(table, schema);
  for (const std::string& w : record.warnings) notes.push_back(w);
  save_transform(out_dir / "transform.txt", record);
  return dataset;
}

DistillSettings distill_settings_from(const ConfigMap& map) {
  DistillSettings s;
  if (auto it = map.find("smote_k"); it != map.end())
    s.smote_k = parse_uint(it->second, "smote_k");
  if (auto it = map.find("expert_rounds"); it != map.end())
    s.rounds = parse_uint(it->second, "expert_rounds");
  if (auto it = map.find("expert_depth"); it != map.end())
    s.depth = parse_uint(it->second, "expert_depth");
  if (auto it = map.find("expert_learning_rate"); it != map.end())
    s.learning_rate = parse_double(it->second, "expert_learning_rate");
  return s;
}

int run_simulate(int scenario, std::size_t n, std::uint64_t seed,
                 const std::string& out_dir) {
  const SimulatedSample sample = generate_scenario(scenario, n, seed);
  const fs::path dir(out_dir);
  write_dataset_csv(dir / "dataset.csv", sample.dataset);
  write_truth(dir / "truth.txt", sample.truth);
  std::printf("wrote %s and %s\n", (dir / "dataset.csv").c_str(),
              (dir / "truth.txt").c_str());
  return 0;
}

int run_fit(const std::string& data_path, const std::string& schema_path,
            const std::string& config_path, const std::string& out_dir) {
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  ConfigMap map;
  if (!config_path.empty()) map = parse_config_file(config_path);
  RunConfig config = run_config_from(map);
  config.validate();

  std::vector<std::string> notes;
  const Dataset full = load_fit_data(data_path, schema_path, dir, notes);

  std::vector<std::size_t> train_rows, holdout_rows;
  split_train_holdout(full, config.train_fraction, config.fit.seed, train_rows,
                      holdout_rows);
  Dataset train = take_rows(full, train_rows);
  if (!holdout_rows.empty()) {
    write_dataset_csv(dir / "holdout.csv", take_rows(full, holdout_rows));
    notes.push_back("held out " + std::to_string(holdout_rows.size()) +
                    " rows to holdout.csv");
  }

  if (!train.has_soft()) {
    if (!train.has_hard())
      throw DataError("data has neither soft probabilities nor hard labels");
    const ExpertModel expert =
        distill(train, distill_settings_from(map), config.fit.prob_clip,
                config.fit.seed, &notes);
    save_expert(dir / "expert.txt", expert);
  }

  if (config.grids_given) {
    const CvResult cv = cross_validate(train, config);
    config.fit.bandwidth = cv.best_h;
    config.fit.lasso_penalty = cv.best_lambda;
    for (const std::string& w : cv.warnings) notes.push_back(w);
    std::ostringstream note;
    note << "cross-validation chose h " << cv.best_h << ", lambda "
         << cv.best_lambda;
    notes.push_back(note.str());
    std::string table = "h,lambda,mean_err\n";
    for (const CvCell& cell : cv.table)
      table += format_double(cell.h) + ',' + format_double(cell.lambda) + ',' +
               format_double(cell.mean_err) + '\n';
    atomic_write_text(dir / "cv_table.csv", table);
  }

  const ModelFit model = fit(train, config.fit);
  save_model(dir / "model.txt", model);

  std::string diag;
  diag += "rows_train " + std::to_string(train.n()) + '\n';
  diag += "rows_holdout " + std::to_string(holdout_rows.size()) + '\n';
  diag += "features " + std::to_string(train.p()) + '\n';
  diag += "bandwidth " + format_double(model.bandwidth) + '\n';
  diag += "lasso_penalty " + format_double(model.lasso_penalty) + '\n';
  diag += std::string("optimizer ") + optimizer_name(config.fit.optimizer) +
          '\n';
  diag += "optimizer_budget " + std::to_string(config.fit.optimizer_budget) +
          '\n';
  diag += "seed " + std::to_string(config.fit.seed) + '\n';
  diag += "objective_value " + format_double(model.objective_value) + '\n';
  diag += "index_scale " + format_double(model.index_scale) + '\n';
  diag += "smoothing_fallbacks " +
          std::to_string(model.diagnostics.smoothing_fallbacks) + '\n';
  diag += std::string("rank_deficient ") +
          (model.diagnostics.rank_deficient ? "1" : "0") + '\n';
  for (const std::string& note : notes) diag += "note " + note + '\n';
  atomic_write_text(dir / "diagnostics.txt", diag);

  for (const std::string& note : notes) std::printf("%s\n", note.c_str());
  std::printf("model written to %s\n", (dir / "model.txt").c_str());
  return 0;
}

int run_evaluate(const std::string& model_path, const std::string& truth_path,
                 const std::string& data_path, std::size_t grid) {
  const ModelFit model = load_model(model_path);
  if (!truth_path.empty()) {
    const ScenarioTruth truth = read_truth(truth_path);
    std::printf("g_mse %s\n", format_double(g_mse(model, truth, grid)).c_str());
    return 0;
  }
  const Dataset data = read_dataset_csv(data_path);
  if (!data.has_hard())
    throw DataError("evaluation data needs a hard_label column");
  if (data.p() != model.beta.size())
    throw DataError("evaluation data feature count does not match the model");
  std::vector<double> probs(data.n());
  for (std::size_t i = 0; i < data.n(); ++i)
    probs[i] = predict(model, data.features.row(i), data.treatment[i]).prob;
  const MetricsReport report = classification_metrics(data.hard_labels, probs);
  std::printf("precision %s\n", format_double(report.precision).c_str());
  std::printf("recall %s\n", format_double(report.recall).c_str());
  std::printf("f1 %s\n", format_double(report.f1).c_str());
  std::printf("auc %s\n", format_double(report.auc).c_str());
  return 0;
}

int run_heatmap(const std::string& model_path, const std::string& out_file,
                std::size_t rows, std::size_t cols,
                const std::string& prog_range, const std::string& index_range) {
  const ModelFit model = load_model(model_path);
  std::pair<double, double> prog{model.prognostic_min, model.prognostic_max};
  if (!prog_range.empty()) prog = parse_range(prog_range, "--prog-range");
  std::pair<double, double> index{type7_quantile(model.train_index, 0.025),
                                  type7_quantile(model.train_index, 0.975)};
  if (!index_range.empty()) index = parse_range(index_range, "--index-range");
  const HeatmapGrid grid = heatmap_grid(model, prog, index, {rows, cols});
  write_heatmap(out_file, grid);
  std::printf("wrote %zux%zu heatmap to %s\n", rows, cols, out_file.c_str());
  return 0;
}

int run_bootstrap(const std::string& data_path, const std::string& config_path,
                  std::size_t k, double level, const std::string& out_file) {
  ConfigMap map;
  if (!config_path.empty()) map = parse_config_file(config_path);
  RunConfig config = run_config_from(map);
  config.validate();
  Dataset data = read_dataset_csv(data_path);
  std::vector<std::string> notes;
  if (!data.has_soft()) {
    if (!data.has_hard())
      throw DataError("data has neither soft probabilities nor hard labels");
    distill(data, distill_settings_from(map), config.fit.prob_clip,
            config.fit.seed, &notes);
  }
  for (const std::string& note : notes) std::printf("%s\n", note.c_str());
  const BootstrapResult result = bootstrap_ci(data, config.fit, k, level);
  if (!out_file.empty()) write_bootstrap(out_file, result, data.feature_names);
  const auto name_of = [&](std::size_t j) {
    return j < data.feature_names.size() ? data.feature_names[j]
                                         : "x" + std::to_string(j + 1);
  };
  std::printf("coefficient,estimate,low,high\n");
  for (std::size_t j = 0; j < result.beta.size(); ++j)
    std::printf("beta:%s,%s,%s,%s\n", name_of(j).c_str(),
                format_double(result.beta[j].estimate).c_str(),
                format_double(result.beta[j].low).c_str(),
                format_double(result.beta[j].high).c_str());
  for (std::size_t j = 0; j < result.xi.size(); ++j)
    std::printf("xi:%s,%s,%s,%s\n", name_of(j).c_str(),
                format_double(result.xi[j].estimate).c_str(),
                format_double(result.xi[j].low).c_str(),
                format_double(result.xi[j].high).c_str());
  if (result.failures > 0)
    std::printf("refit_failures %zu\n", result.failures);
  return 0;
}

int run_benchmark(int scenario, const std::string& sizes_text,
                  std::size_t reps, const std::string& methods_text,
                  const std::string& config_path, std::uint64_t seed,
                  const std::string& out_dir) {
  ConfigMap map;
  if (!config_path.empty()) map = parse_config_file(config_path);
  const RunConfig base = run_config_from(map);
  base.validate();

  const std::vector<std::size_t> sizes =
      parse_size_list(sizes_text, "--sizes");
  std::map<OptimizerKind, FitConfig> config_map;
  for (const std::string& name : split_list(methods_text)) {
    const OptimizerKind kind = optimizer_from_name(name);
    FitConfig fc = base.fit;
    fc.optimizer = kind;
    // DE spends most of its budget converging; mirror its heavier default so
    // the comparison reflects each method run as intended.
    const char* key = kind == OptimizerKind::de      ? "de_budget"
                      : kind == OptimizerKind::tpe   ? "tpe_budget"
                                                     : "random_budget";
    fc.optimizer_budget = kind == OptimizerKind::de ? 1600 : 200;
    if (auto it = map.find(key); it != map.end())
      fc.optimizer_budget = parse_uint(it->second, key);
    config_map[kind] = fc;
  }
  if (config_map.empty()) throw DataError("--methods lists no methods");

  const std::vector<BenchmarkRecord> records =
      benchmark_optimizers(scenario, sizes, reps, config_map, seed);
  const std::vector<BenchmarkCell> cells = summarize_benchmark(records);
  const fs::path dir(out_dir);
  write_benchmark_records(dir / "benchmark_records.csv", records);
  write_benchmark_summary(dir / "benchmark_summary.csv", cells);
  std::printf("method,n,reps_ok,runtime_mean,objective_mean,heatmap_mse_mean\n");
  for (const BenchmarkCell& c : cells)
    std::printf("%s,%zu,%zu,%s,%s,%s\n", optimizer_name(c.method), c.n,
                c.reps_ok, format_double(c.runtime_mean).c_str(),
                format_double(c.objective_mean).c_str(),
                format_double(c.mse_mean).c_str());
  return 0;
}

int run_recommend(const std::string& model_path, const std::string& subject,
                  const std::string& tau_range, std::size_t grid) {
  const ModelFit model = load_model(model_path);
  const std::vector<double> x = parse_double_list(subject, "--subject");
  if (x.size() != model.beta.size())
    throw DataError("subject row has " + std::to_string(x.size()) +
                    " values, model expects " +
                    std::to_string(model.beta.size()));
  const auto [lo, hi] = parse_range(tau_range, "--tau-range");
  const DualScores scores = dual_scores(model, x);
  const TreatmentChoice choice = optimal_treatment(model, x, lo, hi, grid);
  const Prediction at_star = predict(model, x, choice.tau_star);
  std::printf("prognostic_score %s\n", format_double(scores.prognostic).c_str());
  std::printf("interaction_score %s\n",
              format_double(scores.interaction).c_str());
  std::printf("tau_star %s\n", format_double(choice.tau_star).c_str());
  std::printf("g_at_star %s\n", format_double(choice.g_at_star).c_str());
  std::printf("prob_at_star %s\n", format_double(at_star.prob).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-score regression for binary outcomes under continuous "
               "treatment"};
  app.require_subcommand(1);

  int scenario = 1;
  std::size_t n = 1000, reps = 5, rows = 64, cols = 64, grid = 400;
  std::size_t boot_k = 30, opt_grid = 512;
  std::uint64_t seed = 0;
  double level = 0.95;
  std::string data_path, schema_path, config_path, out_dir = ".";
  std::string model_path, truth_path, out_file;
  std::string sizes_text = "100,500,1000", methods_text = "de,tpe,random";
  std::string subject, tau_range, prog_range, index_range;

  CLI::App* sim = app.add_subcommand("simulate", "Generate a scenario dataset");
  sim->add_option("--scenario", scenario, "Scenario id 1..4")
      ->required()
      ->check(CLI::Range(1, 4));
  sim->add_option("--n", n, "Rows to generate")->required();
  sim->add_option("--seed", seed, "Generator seed");
  sim->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit a model to CSV data");
  fit_cmd->add_option("--data", data_path, "Input CSV")->required();
  fit_cmd->add_option("--schema", schema_path,
                      "Column schema for raw CSVs; omit for the "
                      "x1..xp,tau[,soft_prob][,hard_label] layout");
  fit_cmd->add_option("--config", config_path, "key = value settings file");
  fit_cmd->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* eval = app.add_subcommand("evaluate", "Score a fitted model");
  eval->add_option("--model", model_path, "Model file")->required();
  eval->add_option("--truth", truth_path, "Truth file; reports link error");
  eval->add_option("--data", data_path,
                   "Labeled CSV; reports classification metrics");
  eval->add_option("--grid", grid, "Quadrature grid for --truth");

  CLI::App* heat = app.add_subcommand("heatmap", "Export the fitted surface");
  heat->add_option("--model", model_path, "Model file")->required();
  heat->add_option("--out", out_file, "Output file")->required();
  heat->add_option("--rows", rows, "Prognostic axis resolution");
  heat->add_option("--cols", cols, "Index axis resolution");
  heat->add_option("--prog-range", prog_range,
                   "LO,HI for the prognostic axis (default: training range)");
  heat->add_option("--index-range", index_range,
                   "LO,HI for the index axis (default: central 95% of "
                   "training index)");

  CLI::App* boot = app.add_subcommand("bootstrap",
                                      "Bootstrap coefficient intervals");
  boot->add_option("--data", data_path, "Input CSV")->required();
  boot->add_option("--config", config_path, "key = value settings file");
  boot->add_option("--k", boot_k, "Resamples");
  boot->add_option("--level", level, "Interval level in (0,1)");
  boot->add_option("--out", out_file, "Also write the table to this file");

  CLI::App* bench = app.add_subcommand("benchmark", "Compare optimizers");
  bench->add_option("--scenario", scenario, "Scenario id 1..4")
      ->required()
      ->check(CLI::Range(1, 4));
  bench->add_option("--sizes", sizes_text, "Comma-separated sample sizes");
  bench->add_option("--reps", reps, "Repetitions per size");
  bench->add_option("--methods", methods_text, "Comma-separated method names");
  bench->add_option("--config", config_path, "key = value settings file");
  bench->add_option("--seed", seed, "Experiment seed");
  bench->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* rec = app.add_subcommand("recommend",
                                     "Dual scores and optimal treatment");
  rec->add_option("--model", model_path, "Model file")->required();
  rec->add_option("--subject", subject, "Comma-separated feature row")
      ->required();
  rec->add_option("--tau-range", tau_range, "LO,HI treatment range")
      ->required();
  rec->add_option("--grid", opt_grid, "Treatment grid resolution");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (sim->parsed()) return run_simulate(scenario, n, seed, out_dir);
    if (fit_cmd->parsed())
      return run_fit(data_path, schema_path, config_path, out_dir);
    if (eval->parsed()) {
      if (truth_path.empty() == data_path.empty())
        throw DataError("evaluate needs exactly one of --truth or --data");
      return run_evaluate(model_path, truth_path, data_path, grid);
    }
    if (heat->parsed())
      return run_heatmap(model_path, out_file, rows, cols, prog_range,
                         index_range);
    if (boot->parsed())
      return run_bootstrap(data_path, config_path, boot_k, level, out_file);
    if (bench->parsed())
      return run_benchmark(scenario, sizes_text, reps, methods_text,
                           config_path, seed, out_dir);
    if (rec->parsed())
      return run_recommend(model_path, subject, tau_range, opt_grid);
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: data: %s\n", e.what());
    return kExitData;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: numeric: %s\n", e.what());
    return kExitNumeric;
  } catch (const InvalidCandidate& e) {
    std::fprintf(stderr, "error: numeric: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: numeric: %s\n", e.what());
    return kExitNumeric;
  }
  return 0;
}
