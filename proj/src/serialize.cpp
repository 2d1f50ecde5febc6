#include "dsr/serialize.hpp"

#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

namespace dsr {

std::string format_double(double value) {
  char buf[40];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw NumericError("double formatting failed");
  return std::string(buf, ptr);
}

void atomic_write_text(const std::filesystem::path& path, std::string_view text) {
  const std::filesystem::path dir =
      path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  std::filesystem::create_directories(dir);
  const std::filesystem::path temp =
      dir / (path.filename().string() + ".tmp." +
             std::to_string(static_cast<unsigned long>(::getpid())));
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + temp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw DataError("write failed: " + temp.string());
  }
  std::error_code ec;
  std::filesystem::rename(temp, path, ec);
  if (ec) {
    std::filesystem::remove(temp);
    throw DataError("cannot move output into place: " + path.string() + ": " +
                    ec.message());
  }
}

namespace {

double parse_serialized_double(std::string_view text, const std::string& what) {
  double value = 0.0;
  const auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw DataError("cannot parse " + what + ": '" + std::string(text) + "'");
  return value;
}

void append_array(std::string& out, const char* name,
                  std::span<const double> values) {
  out += name;
  out += ' ';
  out += std::to_string(values.size());
  out += '\n';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += format_double(values[i]);
  }
  out += '\n';
}

// Line-oriented reader with one-token lookahead over whitespace-split fields.
class TokenReader {
 public:
  explicit TokenReader(std::string_view text) : in_(std::string(text)) {}

  std::string next(const std::string& what) {
    std::string token;
    if (!(in_ >> token)) throw DataError("unexpected end of input reading " + what);
    return token;
  }

  double next_double(const std::string& what) {
    return parse_serialized_double(next(what), what);
  }

  std::size_t next_size(const std::string& what) {
    const std::string token = next(what);
    std::size_t value = 0;
    const auto [ptr, ec] =
        std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size())
      throw DataError("cannot parse " + what + ": '" + token + "'");
    return value;
  }

  long next_long(const std::string& what) {
    const std::string token = next(what);
    long value = 0;
    const auto [ptr, ec] =
        std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size())
      throw DataError("cannot parse " + what + ": '" + token + "'");
    return value;
  }

  std::vector<double> next_array(const std::string& what) {
    const std::size_t count = next_size(what + " length");
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) values[i] = next_double(what);
    return values;
  }

  void expect(const std::string& token, const std::string& context) {
    const std::string got = next(context);
    if (got != token)
      throw DataError("expected '" + token + "' in " + context + ", got '" + got +
                      "'");
  }

 private:
  std::istringstream in_;
};

}  // namespace

std::string model_to_text(const ModelFit& fit) {
  std::string out;
  out += "dsr_model v1\n";
  out += "kernel ";
  out += kernel_name(fit.kernel);
  out += '\n';
  out += "bandwidth " + format_double(fit.bandwidth) + '\n';
  out += "lasso_penalty " + format_double(fit.lasso_penalty) + '\n';
  out += "index_scale " + format_double(fit.index_scale) + '\n';
  out += "objective_value " + format_double(fit.objective_value) + '\n';
  out += "prognostic_range " + format_double(fit.prognostic_min) + ' ' +
         format_double(fit.prognostic_max) + '\n';
  out += "rank_deficient ";
  out += fit.diagnostics.rank_deficient ? '1' : '0';
  out += '\n';
  out += "smoothing_fallbacks " +
         std::to_string(fit.diagnostics.smoothing_fallbacks) + '\n';
  append_array(out, "beta", fit.beta);
  append_array(out, "xi", fit.xi.coef);
  append_array(out, "train_index", fit.train_index);
  append_array(out, "link_residuals", fit.link_residuals);
  return out;
}

ModelFit model_from_text(std::string_view text) {
  TokenReader reader(text);
  reader.expect("dsr_model", "model header");
  reader.expect("v1", "model version");
  ModelFit fit;
  reader.expect("kernel", "model body");
  fit.kernel = kernel_from_name(reader.next("kernel name"));
  reader.expect("bandwidth", "model body");
  fit.bandwidth = reader.next_double("bandwidth");
  reader.expect("lasso_penalty", "model body");
  fit.lasso_penalty = reader.next_double("lasso_penalty");
  reader.expect("index_scale", "model body");
  fit.index_scale = reader.next_double("index_scale");
  reader.expect("objective_value", "model body");
  fit.objective_value = reader.next_double("objective_value");
  reader.expect("prognostic_range", "model body");
  fit.prognostic_min = reader.next_double("prognostic_min");
  fit.prognostic_max = reader.next_double("prognostic_max");
  reader.expect("rank_deficient", "model body");
  fit.diagnostics.rank_deficient = reader.next_size("rank_deficient") != 0;
  reader.expect("smoothing_fallbacks", "model body");
  fit.diagnostics.smoothing_fallbacks = reader.next_size("smoothing_fallbacks");
  reader.expect("beta", "model body");
  fit.beta = reader.next_array("beta");
  reader.expect("xi", "model body");
  fit.xi.coef = reader.next_array("xi");
  reader.expect("train_index", "model body");
  fit.train_index = reader.next_array("train_index");
  reader.expect("link_residuals", "model body");
  fit.link_residuals = reader.next_array("link_residuals");
  if (fit.beta.size() != fit.xi.coef.size())
    throw DataError("model file: beta and xi lengths differ");
  if (fit.train_index.size() != fit.link_residuals.size())
    throw DataError("model file: train_index and link_residuals lengths differ");
  if (fit.train_index.empty()) throw DataError("model file: no training index");
  fit.build_link_smoother();
  return fit;
}

void save_model(const std::filesystem::path& path, const ModelFit& fit) {
  atomic_write_text(path, model_to_text(fit));
}

ModelFit load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return model_from_text(buffer.str());
}

std::string expert_to_text(const ExpertModel& model) {
  std::string out;
  out += "dsr_expert v1\n";
  out += "base_score " + format_double(model.base_score) + '\n';
  out += "learning_rate " + format_double(model.learning_rate) + '\n';
  out += "feature_count " + std::to_string(model.feature_count) + '\n';
  out += "trees " + std::to_string(model.trees.size()) + '\n';
  for (const RegressionTree& tree : model.trees) {
    out += "tree " + std::to_string(tree.nodes.size()) + '\n';
    for (const TreeNode& node : tree.nodes) {
      out += std::to_string(node.feature) + ' ' + format_double(node.threshold) +
             ' ' + std::to_string(node.left) + ' ' + std::to_string(node.right) +
             ' ' + format_double(node.value) + '\n';
    }
  }
  return out;
}

ExpertModel expert_from_text(std::string_view text) {
  TokenReader reader(text);
  reader.expect("dsr_expert", "expert header");
  reader.expect("v1", "expert version");
  ExpertModel model;
  reader.expect("base_score", "expert body");
  model.base_score = reader.next_double("base_score");
  reader.expect("learning_rate", "expert body");
  model.learning_rate = reader.next_double("learning_rate");
  reader.expect("feature_count", "expert body");
  model.feature_count = reader.next_size("feature_count");
  reader.expect("trees", "expert body");
  const std::size_t tree_count = reader.next_size("tree count");
  model.trees.resize(tree_count);
  for (RegressionTree& tree : model.trees) {
    reader.expect("tree", "tree header");
    const std::size_t nodes = reader.next_size("node count");
    if (nodes == 0) throw DataError("expert file: tree with no nodes");
    tree.nodes.resize(nodes);
    for (TreeNode& node : tree.nodes) {
      node.feature = static_cast<int>(reader.next_long("node feature"));
      node.threshold = reader.next_double("node threshold");
      node.left = static_cast<int>(reader.next_long("node left"));
      node.right = static_cast<int>(reader.next_long("node right"));
      node.value = reader.next_double("node value");
      if (node.feature >= static_cast<int>(model.feature_count))
        throw DataError("expert file: split feature out of range");
      if (node.feature >= 0 &&
          (node.left < 0 || node.right < 0 ||
           node.left >= static_cast<int>(nodes) ||
           node.right >= static_cast<int>(nodes)))
        throw DataError("expert file: child index out of range");
    }
  }
  return model;
}

void save_expert(const std::filesystem::path& path, const ExpertModel& model) {
  atomic_write_text(path, expert_to_text(model));
}

ExpertModel load_expert(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open expert file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return expert_from_text(buffer.str());
}

namespace {

std::string join_doubles(std::span<const double> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
  return out;
}

std::vector<double> split_doubles(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ','))
    out.push_back(parse_serialized_double(part, what));
  if (out.empty()) throw DataError(what + ": empty list");
  return out;
}

}  // namespace

void write_heatmap(const std::filesystem::path& path, const HeatmapGrid& grid) {
  std::string out;
  out += "# prognostic_axis: " + join_doubles(grid.prognostic_axis) + '\n';
  out += "# index_axis: " + join_doubles(grid.index_axis) + '\n';
  for (std::size_t i = 0; i < grid.values.rows(); ++i) {
    out += join_doubles(grid.values.row(i));
    out += '\n';
  }
  atomic_write_text(path, out);
}

HeatmapGrid read_heatmap(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open heatmap file: " + path.string());
  std::string line;
  HeatmapGrid grid;
  if (!std::getline(in, line) || line.rfind("# prognostic_axis: ", 0) != 0)
    throw DataError("heatmap file: missing prognostic axis header");
  grid.prognostic_axis =
      split_doubles(line.substr(std::string("# prognostic_axis: ").size()),
                    "prognostic axis");
  if (!std::getline(in, line) || line.rfind("# index_axis: ", 0) != 0)
    throw DataError("heatmap file: missing index axis header");
  grid.index_axis = split_doubles(
      line.substr(std::string("# index_axis: ").size()), "index axis");
  grid.values = Matrix(grid.prognostic_axis.size(), grid.index_axis.size());
  for (std::size_t i = 0; i < grid.prognostic_axis.size(); ++i) {
    if (!std::getline(in, line))
      throw DataError("heatmap file: missing grid row " + std::to_string(i));
    const std::vector<double> row = split_doubles(line, "heatmap row");
    if (row.size() != grid.index_axis.size())
      throw DataError("heatmap file: row width mismatch");
    std::copy(row.begin(), row.end(), grid.values.row(i).begin());
  }
  return grid;
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& dataset) {
  std::string out;
  const std::size_t p = dataset.p();
  for (std::size_t j = 0; j < p; ++j) {
    out += dataset.feature_names.empty() ? "x" + std::to_string(j + 1)
                                         : dataset.feature_names[j];
    out += ',';
  }
  out += "tau";
  if (dataset.has_soft()) out += ",soft_prob";
  if (dataset.has_hard()) out += ",hard_label";
  out += '\n';
  for (std::size_t i = 0; i < dataset.n(); ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      out += format_double(dataset.features(i, j));
      out += ',';
    }
    out += format_double(dataset.treatment[i]);
    if (dataset.has_soft()) {
      out += ',';
      out += format_double(dataset.soft_probs[i]);
    }
    if (dataset.has_hard()) {
      out += ',';
      out += dataset.hard_labels[i] ? '1' : '0';
    }
    out += '\n';
  }
  atomic_write_text(path, out);
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty dataset file: " + path.string());

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string part;
    while (std::getline(ss, part, ',')) header.push_back(part);
  }
  long tau_at = -1, soft_at = -1, hard_at = -1;
  std::vector<std::size_t> feature_cols;
  Dataset dataset;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == "tau") tau_at = static_cast<long>(j);
    else if (header[j] == "soft_prob") soft_at = static_cast<long>(j);
    else if (header[j] == "hard_label") hard_at = static_cast<long>(j);
    else {
      feature_cols.push_back(j);
      dataset.feature_names.push_back(header[j]);
    }
  }
  if (tau_at < 0) throw DataError("dataset file has no tau column");
  if (feature_cols.empty()) throw DataError("dataset file has no feature columns");

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string part;
    while (std::getline(ss, part, ','))
      row.push_back(parse_serialized_double(
          part, "dataset row " + std::to_string(line_no)));
    if (row.size() != header.size())
      throw DataError("dataset row " + std::to_string(line_no) + " width mismatch");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("dataset file has no data rows");

  dataset.features = Matrix(rows.size(), feature_cols.size());
  dataset.treatment.resize(rows.size());
  if (soft_at >= 0) dataset.soft_probs.resize(rows.size());
  if (hard_at >= 0) dataset.hard_labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < feature_cols.size(); ++j)
      dataset.features(i, j) = rows[i][feature_cols[j]];
    dataset.treatment[i] = rows[i][static_cast<std::size_t>(tau_at)];
    if (soft_at >= 0)
      dataset.soft_probs[i] = rows[i][static_cast<std::size_t>(soft_at)];
    if (hard_at >= 0)
      dataset.hard_labels[i] =
          rows[i][static_cast<std::size_t>(hard_at)] != 0.0 ? 1 : 0;
  }
  try {
    dataset.validate();
  } catch (const std::invalid_argument& e) {
    // Structural problems in a file are data errors, not API misuse.
    throw DataError(e.what());
  }
  return dataset;
}

void write_truth(const std::filesystem::path& path, const ScenarioTruth& truth) {
  std::string out;
  out += "dsr_truth v1\n";
  out += "scenario " + std::to_string(truth.scenario_id) + '\n';
  append_array(out, "beta_true", truth.beta_true);
  append_array(out, "xi_true", truth.xi_true.coef);
  atomic_write_text(path, out);
}

ScenarioTruth read_truth(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open truth file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  TokenReader reader(buffer.str());
  reader.expect("dsr_truth", "truth header");
  reader.expect("v1", "truth version");
  ScenarioTruth truth;
  reader.expect("scenario", "truth body");
  truth.scenario_id = static_cast<int>(reader.next_long("scenario id"));
  if (truth.scenario_id < 1 || truth.scenario_id > 4)
    throw DataError("truth file: scenario id out of range");
  reader.expect("beta_true", "truth body");
  truth.beta_true = reader.next_array("beta_true");
  reader.expect("xi_true", "truth body");
  truth.xi_true.coef = reader.next_array("xi_true");
  truth.p = truth.beta_true.size();
  if (truth.xi_true.coef.size() != truth.p)
    throw DataError("truth file: beta and xi lengths differ");
  return truth;
}

void write_benchmark_records(const std::filesystem::path& path,
                             std::span<const BenchmarkRecord> records) {
  std::string out = "method,n,rep,runtime_s,objective,heatmap_mse,error\n";
  for (const BenchmarkRecord& r : records) {
    out += optimizer_name(r.method);
    out += ',' + std::to_string(r.n) + ',' + std::to_string(r.rep) + ',';
    if (r.failed) {
      out += ",,," + r.error;
    } else {
      out += format_double(r.runtime_s) + ',' + format_double(r.objective) + ',' +
             format_double(r.heatmap_mse) + ',';
    }
    out += '\n';
  }
  atomic_write_text(path, out);
}

void write_benchmark_summary(const std::filesystem::path& path,
                             std::span<const BenchmarkCell> cells) {
  std::string out =
      "method,n,reps_ok,runtime_mean,runtime_sd,objective_mean,objective_sd,"
      "heatmap_mse_mean,heatmap_mse_sd\n";
  for (const BenchmarkCell& c : cells) {
    out += optimizer_name(c.method);
    out += ',' + std::to_string(c.n) + ',' + std::to_string(c.reps_ok) + ',' +
           format_double(c.runtime_mean) + ',' + format_double(c.runtime_sd) +
           ',' + format_double(c.objective_mean) + ',' +
           format_double(c.objective_sd) + ',' + format_double(c.mse_mean) + ',' +
           format_double(c.mse_sd) + '\n';
  }
  atomic_write_text(path, out);
}

void write_convergence(const std::filesystem::path& path,
                       const ConvergenceOutcome& outcome) {
  std::string out = "n,rep,mse,runtime_s,error\n";
  for (const ConvergenceCell& c : outcome.cells) {
    out += std::to_string(c.n) + ',' + std::to_string(c.rep) + ',';
    if (c.failed)
      out += ",," + c.error;
    else
      out += format_double(c.mse) + ',' + format_double(c.runtime_s) + ',';
    out += '\n';
  }
  out += "\nn,mean_mse,std_mse,reps_ok\n";
  for (const ConvergenceRow& r : outcome.rows)
    out += std::to_string(r.n) + ',' + format_double(r.mean_mse) + ',' +
           format_double(r.std_mse) + ',' + std::to_string(r.reps_ok) + '\n';
  atomic_write_text(path, out);
}

void write_bootstrap(const std::filesystem::path& path,
                     const BootstrapResult& result,
                     std::span<const std::string> feature_names) {
  const auto name_of = [&](std::size_t j) {
    return j < feature_names.size() ? feature_names[j]
                                    : "x" + std::to_string(j + 1);
  };
  std::string out = "coefficient,estimate,low,high\n";
  for (std::size_t j = 0; j < result.beta.size(); ++j)
    out += "beta:" + name_of(j) + ',' + format_double(result.beta[j].estimate) +
           ',' + format_double(result.beta[j].low) + ',' +
           format_double(result.beta[j].high) + '\n';
  for (std::size_t j = 0; j < result.xi.size(); ++j)
    out += "xi:" + name_of(j) + ',' + format_double(result.xi[j].estimate) + ',' +
           format_double(result.xi[j].low) + ',' +
           format_double(result.xi[j].high) + '\n';
  atomic_write_text(path, out);
}

std::string transform_to_text(const TransformRecord& record) {
  std::string out = "dsr_transform v1\n";
  for (const ColumnTransform& tr : record.columns) {
    out += tr.name;
    out += ' ';
    out += role_name(tr.role);
    if (tr.role == ColumnRole::continuous) {
      out += tr.dropped ? " dropped"
                        : " mean " + format_double(tr.mean) + " sd " +
                              format_double(tr.sd);
    } else if (tr.role == ColumnRole::categorical) {
      out += " levels";
      for (const std::string& level : tr.levels) out += ' ' + level;
    }
    out += '\n';
  }
  return out;
}

void save_transform(const std::filesystem::path& path,
                    const TransformRecord& record) {
  atomic_write_text(path, transform_to_text(record));
}

}  // namespace dsr
