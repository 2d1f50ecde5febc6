#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dsr/model.hpp"

namespace dsr {

// One node of an axis-aligned regression tree. Internal nodes route
// x[feature] < threshold to left, otherwise right; leaves have feature -1
// and carry the unshrunk Newton value.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // preorder, root at 0
  double predict(std::span<const double> row) const;
};

struct ExpertModel {
  std::vector<RegressionTree> trees;
  double learning_rate = 0.1;
  double base_score = 0.0;  // initial log-odds
  std::size_t feature_count = 0;
};

struct SmoteResult {
  Matrix features;
  std::vector<std::uint8_t> labels;
};

// Synthetic minority oversampling: interpolate uniformly between a random
// minority row and one of its k nearest minority neighbors until
// minority/majority reaches target_ratio. Majority rows are untouched.
SmoteResult smote(const Matrix& features, std::span<const std::uint8_t> labels,
                  std::size_t k_neighbors, double target_ratio,
                  std::uint64_t seed);

// Gradient boosting with logistic loss: exact greedy splits on a canonical
// row order (so training is invariant to input row permutation), Newton
// leaf values with L2 smoothing 1.0.
ExpertModel train_expert(const Matrix& features,
                         std::span<const std::uint8_t> labels, std::size_t rounds,
                         std::size_t depth, double learning_rate,
                         std::uint64_t seed);

std::vector<double> expert_probabilities(const ExpertModel& model,
                                         const Matrix& features);

// Fills soft_probs with clipped expert probabilities on the original rows;
// SMOTE augmentation never leaves expert training.
Dataset soft_label_dataset(const Dataset& dataset, const ExpertModel& expert,
                           double prob_clip);

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double auc = 0.0;  // NaN when labels are single-class
};

// Threshold metrics (predict 1 at prob >= threshold) and Mann-Whitney AUC
// with half credit for ties.
MetricsReport classification_metrics(std::span<const std::uint8_t> labels,
                                     std::span<const double> probabilities,
                                     double threshold = 0.5);

struct DistillSettings {
  std::size_t smote_k = 5;
  double smote_ratio = 1.0;
  std::size_t rounds = 200;
  std::size_t depth = 4;
  double learning_rate = 0.1;
};

// Balances with SMOTE, trains the boosted expert on the augmented rows, and
// soft-labels the original rows in place. Returns the expert for export;
// appends a summary line to notes when given.
ExpertModel distill(Dataset& data, const DistillSettings& settings,
                    double prob_clip, std::uint64_t seed,
                    std::vector<std::string>* notes = nullptr);

}  // namespace dsr
