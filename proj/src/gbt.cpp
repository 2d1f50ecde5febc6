#include "dsr/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dsr/rng.hpp"

namespace dsr {

double RegressionTree::predict(std::span<const double> row) const {
  int at = 0;
  while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
    const TreeNode& node = nodes[static_cast<std::size_t>(at)];
    at = row[static_cast<std::size_t>(node.feature)] < node.threshold ? node.left
                                                                      : node.right;
  }
  return nodes[static_cast<std::size_t>(at)].value;
}

namespace {

constexpr double kL2 = 1.0;  // leaf smoothing
constexpr double kMinGain = 1e-12;

std::pair<std::size_t, std::size_t> class_counts(
    std::span<const std::uint8_t> labels) {
  std::size_t zeros = 0, ones = 0;
  for (std::uint8_t y : labels) (y ? ones : zeros) += 1;
  return {zeros, ones};
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

struct SplitChoice {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

struct TreeBuilder {
  const Matrix& x;
  const std::vector<double>& grad;
  const std::vector<double>& hess;
  std::size_t max_depth;
  std::vector<TreeNode> nodes;
  // Per-node scratch: row ids sorted by the scanned feature.
  std::vector<std::pair<double, std::size_t>> keyed;

  int build(std::vector<std::size_t>& rows, std::size_t depth) {
    double g_sum = 0.0, h_sum = 0.0;
    for (std::size_t r : rows) {
      g_sum += grad[r];
      h_sum += hess[r];
    }

    SplitChoice best;
    if (depth < max_depth && rows.size() >= 2) {
      const double parent_score = g_sum * g_sum / (h_sum + kL2);
      for (std::size_t f = 0; f < x.cols(); ++f) {
        keyed.clear();
        for (std::size_t r : rows) keyed.emplace_back(x(r, f), r);
        std::sort(keyed.begin(), keyed.end());
        double gl = 0.0, hl = 0.0;
        for (std::size_t k = 0; k + 1 < keyed.size(); ++k) {
          gl += grad[keyed[k].second];
          hl += hess[keyed[k].second];
          if (keyed[k].first == keyed[k + 1].first) continue;
          const double gr = g_sum - gl;
          const double hr = h_sum - hl;
          const double gain = gl * gl / (hl + kL2) + gr * gr / (hr + kL2) -
                              parent_score;
          // strict improvement, so the first best in (feature, threshold)
          // scan order wins ties deterministically
          if (gain > best.gain + kMinGain) {
            best.gain = gain;
            best.feature = static_cast<int>(f);
            best.threshold = 0.5 * (keyed[k].first + keyed[k + 1].first);
          }
        }
      }
    }

    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    if (best.feature < 0 || best.gain <= kMinGain) {
      nodes[static_cast<std::size_t>(id)].value = -g_sum / (h_sum + kL2);
      return id;
    }

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows)
      (x(r, static_cast<std::size_t>(best.feature)) < best.threshold ? left
                                                                      : right)
          .push_back(r);
    nodes[static_cast<std::size_t>(id)].feature = best.feature;
    nodes[static_cast<std::size_t>(id)].threshold = best.threshold;
    rows.clear();
    rows.shrink_to_fit();
    const int left_id = build(left, depth + 1);
    nodes[static_cast<std::size_t>(id)].left = left_id;
    const int right_id = build(right, depth + 1);
    nodes[static_cast<std::size_t>(id)].right = right_id;
    return id;
  }
};

// Rank rows by content (features then label) so split statistics accumulate
// in the same order no matter how the input rows were permuted.
std::vector<std::size_t> canonical_order(const Matrix& x,
                                         std::span<const std::uint8_t> labels) {
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    auto ra = x.row(a);
    auto rb = x.row(b);
    for (std::size_t j = 0; j < ra.size(); ++j) {
      if (ra[j] < rb[j]) return true;
      if (ra[j] > rb[j]) return false;
    }
    return labels[a] < labels[b];
  });
  return order;
}

}  // namespace

SmoteResult smote(const Matrix& features, std::span<const std::uint8_t> labels,
                  std::size_t k_neighbors, double target_ratio,
                  std::uint64_t seed) {
  if (features.rows() != labels.size())
    throw std::invalid_argument("features and labels row counts differ");
  if (k_neighbors == 0) throw std::invalid_argument("k_neighbors must be >= 1");
  if (!(target_ratio > 0.0))
    throw std::invalid_argument("target_ratio must be positive");
  const auto [zeros, ones] = class_counts(labels);
  if (zeros == 0 || ones == 0) throw DataError("smote needs both classes present");

  const std::uint8_t minority_label = ones <= zeros ? 1 : 0;
  const std::size_t minority = std::min(zeros, ones);
  const std::size_t majority = std::max(zeros, ones);
  if (minority <= 1) throw DataError("smote needs at least two minority rows");

  const auto target =
      static_cast<std::size_t>(std::llround(target_ratio * static_cast<double>(majority)));
  const std::size_t needed = target > minority ? target - minority : 0;

  std::vector<std::size_t> minority_rows;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == minority_label) minority_rows.push_back(i);

  const std::size_t p = features.cols();
  SmoteResult out;
  out.features = Matrix(features.rows() + needed, p);
  out.labels.assign(labels.begin(), labels.end());
  for (std::size_t i = 0; i < features.rows(); ++i)
    std::copy(features.row(i).begin(), features.row(i).end(),
              out.features.row(i).begin());

  const std::size_t k_eff = std::min(k_neighbors, minority - 1);
  std::vector<std::vector<std::size_t>> neighbor_cache(minority_rows.size());
  Rng rng = substream(seed, "smote");

  for (std::size_t s = 0; s < needed; ++s) {
    const std::size_t pick = rng.uniform_int(minority_rows.size());
    auto& neighbors = neighbor_cache[pick];
    if (neighbors.empty()) {
      std::vector<std::pair<double, std::size_t>> dist;
      dist.reserve(minority_rows.size() - 1);
      for (std::size_t m = 0; m < minority_rows.size(); ++m) {
        if (m == pick) continue;
        dist.emplace_back(squared_distance(features.row(minority_rows[pick]),
                                           features.row(minority_rows[m])),
                          minority_rows[m]);
      }
      std::sort(dist.begin(), dist.end());
      for (std::size_t k = 0; k < k_eff; ++k) neighbors.push_back(dist[k].second);
    }
    const std::size_t buddy = neighbors[rng.uniform_int(neighbors.size())];
    const double gap = rng.uniform01();
    auto base = features.row(minority_rows[pick]);
    auto other = features.row(buddy);
    auto dst = out.features.row(features.rows() + s);
    for (std::size_t j = 0; j < p; ++j)
      dst[j] = base[j] + gap * (other[j] - base[j]);
    out.labels.push_back(minority_label);
  }
  return out;
}

ExpertModel train_expert(const Matrix& features,
                         std::span<const std::uint8_t> labels, std::size_t rounds,
                         std::size_t depth, double learning_rate,
                         std::uint64_t seed) {
  (void)seed;  // training is deterministic; the seed is part of the contract
               // so stochastic variants (row subsampling) could slot in
  const std::size_t n = features.rows();
  if (n != labels.size())
    throw std::invalid_argument("features and labels row counts differ");
  if (n < 10) throw DataError("expert training needs at least 10 rows");
  if (depth == 0) throw std::invalid_argument("depth must be >= 1");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("learning_rate must be positive");
  const auto [zeros, ones] = class_counts(labels);
  if (zeros == 0 || ones == 0)
    throw DataError("expert training needs both classes present");

  const std::vector<std::size_t> order = canonical_order(features, labels);

  ExpertModel model;
  model.learning_rate = learning_rate;
  model.feature_count = features.cols();
  model.base_score =
      logit(static_cast<double>(ones) / static_cast<double>(n));

  std::vector<double> margin(n, model.base_score);
  std::vector<double> grad(n), hess(n);
  for (std::size_t round = 0; round < rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double prob = sigmoid(margin[i]);
      grad[i] = prob - static_cast<double>(labels[i]);
      hess[i] = prob * (1.0 - prob);
    }
    TreeBuilder builder{features, grad, hess, depth, {}, {}};
    std::vector<std::size_t> rows = order;
    builder.build(rows, 0);
    RegressionTree tree{std::move(builder.nodes)};
    for (std::size_t i = 0; i < n; ++i)
      margin[i] += learning_rate * tree.predict(features.row(i));
    model.trees.push_back(std::move(tree));
  }
  return model;
}

std::vector<double> expert_probabilities(const ExpertModel& model,
                                         const Matrix& features) {
  if (features.cols() != model.feature_count)
    throw std::invalid_argument("feature width does not match expert");
  std::vector<double> out(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    double margin = model.base_score;
    for (const RegressionTree& tree : model.trees)
      margin += model.learning_rate * tree.predict(features.row(i));
    out[i] = sigmoid(margin);
  }
  return out;
}

Dataset soft_label_dataset(const Dataset& dataset, const ExpertModel& expert,
                           double prob_clip) {
  if (!dataset.has_hard()) throw DataError("dataset has no hard labels");
  if (!(prob_clip > 0.0 && prob_clip < 0.5))
    throw std::invalid_argument("prob_clip must lie in (0, 0.5)");
  Dataset out = dataset;
  const std::vector<double> probs =
      expert_probabilities(expert, dataset.features);
  out.soft_probs.resize(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i)
    out.soft_probs[i] = std::clamp(probs[i], prob_clip, 1.0 - prob_clip);
  return out;
}

MetricsReport classification_metrics(std::span<const std::uint8_t> labels,
                                     std::span<const double> probabilities,
                                     double threshold) {
  if (labels.size() != probabilities.size())
    throw std::invalid_argument("labels and probabilities lengths differ");
  if (labels.empty()) throw std::invalid_argument("metrics need at least one row");

  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted = probabilities[i] >= threshold;
    if (predicted && labels[i]) ++tp;
    if (predicted && !labels[i]) ++fp;
    if (!predicted && labels[i]) ++fn;
  }
  MetricsReport report;
  report.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  report.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  report.f1 = report.precision + report.recall > 0.0
                  ? 2.0 * report.precision * report.recall /
                        (report.precision + report.recall)
                  : 0.0;

  const auto [zeros, ones] = class_counts(labels);
  if (zeros == 0 || ones == 0) {
    report.auc = std::numeric_limits<double>::quiet_NaN();
    return report;
  }

  // Mann-Whitney with midranks: ties get half credit.
  std::vector<std::size_t> by_prob(labels.size());
  std::iota(by_prob.begin(), by_prob.end(), std::size_t{0});
  std::stable_sort(by_prob.begin(), by_prob.end(), [&](std::size_t a, std::size_t b) {
    return probabilities[a] < probabilities[b];
  });
  double rank_sum_pos = 0.0;
  std::size_t at = 0;
  while (at < by_prob.size()) {
    std::size_t end = at + 1;
    while (end < by_prob.size() &&
           probabilities[by_prob[end]] == probabilities[by_prob[at]])
      ++end;
    const double midrank = 0.5 * static_cast<double>(at + 1 + end);
    for (std::size_t k = at; k < end; ++k)
      if (labels[by_prob[k]]) rank_sum_pos += midrank;
    at = end;
  }
  const double n_pos = static_cast<double>(ones);
  const double n_neg = static_cast<double>(zeros);
  report.auc = (rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
  return report;
}

ExpertModel distill(Dataset& data, const DistillSettings& settings,
                    double prob_clip, std::uint64_t seed,
                    std::vector<std::string>* notes) {
  const SmoteResult balanced =
      smote(data.features, data.hard_labels, settings.smote_k,
            settings.smote_ratio, substream_seed(seed, "distill-smote"));
  const ExpertModel expert = train_expert(
      balanced.features, balanced.labels, settings.rounds, settings.depth,
      settings.learning_rate, substream_seed(seed, "distill-expert"));
  if (notes) {
    const MetricsReport report = classification_metrics(
        data.hard_labels, expert_probabilities(expert, data.features));
    std::ostringstream note;
    note << "distilled soft labels from " << balanced.labels.size()
         << " balanced rows (training auc " << report.auc << ")";
    notes->push_back(note.str());
  }
  data = soft_label_dataset(data, expert, prob_clip);
  return expert;
}

}  // namespace dsr
