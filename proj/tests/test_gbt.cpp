#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "dsr/gbt.hpp"
#include "dsr/model.hpp"
#include "dsr/rng.hpp"

using namespace dsr;

namespace {

Matrix make_matrix(std::size_t rows, std::size_t cols,
                   std::initializer_list<double> values) {
  Matrix m(rows, cols);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

bool matrices_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (a(i, j) != b(i, j)) return false;
  return true;
}

// Two noisy features, label decided by a threshold on the first. Separable,
// so a shallow greedy tree can rank the classes perfectly.
std::pair<Matrix, std::vector<std::uint8_t>> threshold_task(std::size_t n,
                                                            std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(n, 2);
  std::vector<std::uint8_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform(-1.0, 1.0);
    x(i, 1) = rng.uniform(-1.0, 1.0);
    y[i] = x(i, 0) > 0.2 ? 1 : 0;
  }
  return {std::move(x), std::move(y)};
}

double mean_logistic_loss(std::span<const std::uint8_t> labels,
                          const std::vector<double>& probs) {
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    s += labels[i] ? -std::log(probs[i]) : -std::log(1.0 - probs[i]);
  return s / static_cast<double>(labels.size());
}

// Independent traversal used as an oracle against RegressionTree::predict
// and expert_probabilities.
double walk_tree(const RegressionTree& tree, std::span<const double> row) {
  std::size_t at = 0;
  for (;;) {
    const TreeNode& node = tree.nodes[at];
    if (node.feature < 0) return node.value;
    const bool go_left = row[static_cast<std::size_t>(node.feature)] < node.threshold;
    at = static_cast<std::size_t>(go_left ? node.left : node.right);
  }
}

}  // namespace

TEST_CASE("classification metrics match a hand-built confusion matrix") {
  const std::vector<std::uint8_t> labels = {1, 0, 1, 0};
  const std::vector<double> probs = {0.9, 0.8, 0.7, 0.1};
  const MetricsReport report = classification_metrics(labels, probs, 0.5);
  // Predictions at 0.5 are (1, 1, 1, 0): tp = 2, fp = 1, fn = 0.
  CHECK(report.precision == 2.0 / 3.0);
  CHECK(report.recall == 1.0);
  CHECK(report.f1 == doctest::Approx(0.8).epsilon(1e-12));
  // Of the four positive/negative pairs only (0.7, 0.8) is misordered.
  CHECK(report.auc == 0.75);
}

TEST_CASE("perfect separation scores ones across the board") {
  const std::vector<std::uint8_t> labels = {0, 0, 1, 1};
  const std::vector<double> probs = {0.1, 0.2, 0.8, 0.9};
  const MetricsReport report = classification_metrics(labels, probs, 0.5);
  CHECK(report.precision == 1.0);
  CHECK(report.recall == 1.0);
  CHECK(report.f1 == 1.0);
  CHECK(report.auc == 1.0);
}

TEST_CASE("tied probabilities earn half credit") {
  const std::vector<std::uint8_t> labels = {1, 0, 1, 0};
  const std::vector<double> probs = {0.5, 0.5, 0.5, 0.5};
  const MetricsReport report = classification_metrics(labels, probs, 0.5);
  CHECK(report.auc == 0.5);
  // >= at the threshold predicts everything positive.
  CHECK(report.precision == 0.5);
  CHECK(report.recall == 1.0);
}

TEST_CASE("auc ignores any strictly monotone rescaling") {
  Rng rng(17);
  std::vector<std::uint8_t> labels(40);
  std::vector<double> probs(40), cubed(40);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = i % 3 == 0 ? 1 : 0;
    probs[i] = rng.uniform01();
    cubed[i] = probs[i] * probs[i] * probs[i];
  }
  const MetricsReport a = classification_metrics(labels, probs, 0.5);
  const MetricsReport b = classification_metrics(labels, cubed, 0.5);
  CHECK(a.auc == b.auc);
}

TEST_CASE("single-class labels leave auc undefined but keep threshold metrics") {
  const std::vector<std::uint8_t> labels = {1, 1, 1};
  const std::vector<double> probs = {0.9, 0.4, 0.6};
  const MetricsReport report = classification_metrics(labels, probs, 0.5);
  CHECK(std::isnan(report.auc));
  CHECK(report.precision == 1.0);
  CHECK(report.recall == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(report.f1 == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("classification metrics validate their inputs") {
  const std::vector<std::uint8_t> labels = {1, 0};
  const std::vector<double> short_probs = {0.5};
  CHECK_THROWS_AS(classification_metrics(labels, short_probs, 0.5),
                  std::invalid_argument);
  CHECK_THROWS_AS(classification_metrics(std::vector<std::uint8_t>{},
                                         std::vector<double>{}, 0.5),
                  std::invalid_argument);
}

TEST_CASE("smote leaves an already-balanced dataset untouched") {
  const Matrix x = make_matrix(6, 2,
                               {0.0, 1.0,  //
                                1.0, 0.0,  //
                                2.0, 2.0,  //
                                5.0, 5.0,  //
                                6.0, 4.0,  //
                                4.0, 6.0});
  const std::vector<std::uint8_t> y = {0, 0, 0, 1, 1, 1};
  const SmoteResult out = smote(x, y, 2, 1.0, 9);
  CHECK(matrices_equal(out.features, x));
  CHECK(out.labels == y);

  // A target ratio below the current balance also adds nothing.
  const std::vector<std::uint8_t> skewed = {0, 0, 0, 0, 1, 1};
  const SmoteResult lazy = smote(x, skewed, 1, 0.4, 9);
  CHECK(matrices_equal(lazy.features, x));
  CHECK(lazy.labels == skewed);
}

TEST_CASE("smote interpolates along the segment between neighbors") {
  // Minority at (0,0) and (1,1); every synthetic row must sit on x = y
  // inside the unit box, because each draw blends one point toward the
  // other by a uniform fraction.
  Matrix x = make_matrix(6, 2,
                         {0.0, 0.0,  //
                          1.0, 1.0,  //
                          8.0, 0.0,  //
                          8.0, 1.0,  //
                          9.0, 0.0,  //
                          9.0, 1.0});
  const std::vector<std::uint8_t> y = {1, 1, 0, 0, 0, 0};
  const SmoteResult out = smote(x, y, 1, 1.0, 4);
  REQUIRE(out.features.rows() == 8);
  REQUIRE(out.labels.size() == 8);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(out.labels[i] == y[i]);
    for (std::size_t j = 0; j < 2; ++j) CHECK(out.features(i, j) == x(i, j));
  }
  for (std::size_t i = 6; i < 8; ++i) {
    CHECK(out.labels[i] == 1);
    CHECK(out.features(i, 0) == out.features(i, 1));
    CHECK(out.features(i, 0) >= 0.0);
    CHECK(out.features(i, 0) <= 1.0);
  }
}

TEST_CASE("smote on a duplicated minority point reproduces that point") {
  Matrix x = make_matrix(5, 2,
                         {3.5, -1.0,  //
                          3.5, -1.0,  //
                          0.0, 0.0,   //
                          0.5, 0.0,   //
                          1.0, 0.0});
  const std::vector<std::uint8_t> y = {1, 1, 0, 0, 0};
  const SmoteResult out = smote(x, y, 3, 2.0, 11);
  REQUIRE(out.features.rows() == 9);
  for (std::size_t i = 5; i < 9; ++i) {
    CHECK(out.features(i, 0) == 3.5);
    CHECK(out.features(i, 1) == -1.0);
    CHECK(out.labels[i] == 1);
  }
}

TEST_CASE("smote synthetics stay inside the minority bounding box") {
  Matrix x(12, 2);
  std::vector<std::uint8_t> y(12, 0);
  const double minority_pts[3][2] = {{0.0, 0.0}, {2.0, 1.0}, {1.0, 3.0}};
  for (std::size_t i = 0; i < 3; ++i) {
    x(i, 0) = minority_pts[i][0];
    x(i, 1) = minority_pts[i][1];
    y[i] = 1;
  }
  Rng rng(33);
  for (std::size_t i = 3; i < 12; ++i) {
    x(i, 0) = rng.uniform(10.0, 20.0);
    x(i, 1) = rng.uniform(10.0, 20.0);
  }
  // k far above the minority count is clamped to minority - 1.
  const SmoteResult out = smote(x, y, 50, 1.0, 7);
  REQUIRE(out.features.rows() == 18);
  for (std::size_t i = 12; i < 18; ++i) {
    CHECK(out.features(i, 0) >= 0.0);
    CHECK(out.features(i, 0) <= 2.0);
    CHECK(out.features(i, 1) >= 0.0);
    CHECK(out.features(i, 1) <= 3.0);
  }
  // Majority rows come through bit for bit.
  for (std::size_t i = 3; i < 12; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(out.features(i, j) == x(i, j));
}

TEST_CASE("smote is a pure function of the seed") {
  Matrix x = make_matrix(6, 2,
                         {0.0, 0.0,  //
                          1.0, 1.0,  //
                          8.0, 0.0,  //
                          8.0, 1.0,  //
                          9.0, 0.0,  //
                          9.0, 1.0});
  const std::vector<std::uint8_t> y = {1, 1, 0, 0, 0, 0};
  const SmoteResult a = smote(x, y, 1, 1.0, 21);
  const SmoteResult b = smote(x, y, 1, 1.0, 21);
  CHECK(matrices_equal(a.features, b.features));
  CHECK(a.labels == b.labels);
  const SmoteResult c = smote(x, y, 1, 1.0, 22);
  CHECK_FALSE(matrices_equal(a.features, c.features));
}

TEST_CASE("smote validates arguments") {
  Matrix x = make_matrix(4, 1, {0.0, 1.0, 2.0, 3.0});
  const std::vector<std::uint8_t> y = {1, 1, 0, 0};
  const std::vector<std::uint8_t> short_y = {1, 0};
  CHECK_THROWS_AS(smote(x, short_y, 1, 1.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(smote(x, y, 0, 1.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(smote(x, y, 1, 0.0, 5), std::invalid_argument);
  const std::vector<std::uint8_t> uniform = {1, 1, 1, 1};
  CHECK_THROWS_WITH_AS(smote(x, uniform, 1, 1.0, 5),
                       doctest::Contains("both classes"), DataError);
  const std::vector<std::uint8_t> lonely = {1, 0, 0, 0};
  CHECK_THROWS_WITH_AS(smote(x, lonely, 1, 1.0, 5),
                       doctest::Contains("two minority"), DataError);
}

TEST_CASE("zero boosting rounds predict the label mean everywhere") {
  Matrix x(10, 2);
  std::vector<std::uint8_t> y(10, 0);
  Rng rng(3);
  for (std::size_t i = 0; i < 10; ++i) {
    x(i, 0) = rng.uniform(-1.0, 1.0);
    x(i, 1) = rng.uniform(-1.0, 1.0);
  }
  y[0] = y[1] = y[2] = 1;
  const ExpertModel model = train_expert(x, y, 0, 2, 0.1, 1);
  CHECK(model.trees.empty());
  CHECK(model.base_score == doctest::Approx(logit(0.3)).epsilon(1e-12));
  const std::vector<double> probs = expert_probabilities(model, x);
  for (double p : probs) {
    CHECK(p == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("a separable threshold rule is learned to near-perfect rank order") {
  const auto [x, y] = threshold_task(60, 29);
  const ExpertModel model = train_expert(x, y, 10, 2, 0.1, 1);
  const std::vector<double> probs = expert_probabilities(model, x);
  const MetricsReport report = classification_metrics(y, probs, 0.5);
  CHECK(report.auc >= 0.99);
  for (double p : probs) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("expert training is invariant to row permutation") {
  const auto [x, y] = threshold_task(40, 57);
  // Flip a few labels so the trees have to work with impure leaves.
  std::vector<std::uint8_t> noisy = y;
  noisy[4] ^= 1;
  noisy[19] ^= 1;
  noisy[33] ^= 1;

  Matrix shuffled(x.rows(), x.cols());
  std::vector<std::uint8_t> shuffled_y(noisy.size());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const std::size_t src = (i * 17 + 5) % x.rows();  // 17 is coprime to 40
    for (std::size_t j = 0; j < x.cols(); ++j) shuffled(i, j) = x(src, j);
    shuffled_y[i] = noisy[src];
  }

  const ExpertModel a = train_expert(x, noisy, 6, 3, 0.2, 1);
  const ExpertModel b = train_expert(shuffled, shuffled_y, 6, 3, 0.2, 1);
  CHECK(a.base_score == b.base_score);
  REQUIRE(a.trees.size() == b.trees.size());
  const std::vector<double> pa = expert_probabilities(a, x);
  const std::vector<double> pb = expert_probabilities(b, x);
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
}

TEST_CASE("training loss never increases across rounds") {
  const auto [x, y] = threshold_task(50, 71);
  std::vector<std::uint8_t> noisy = y;
  noisy[2] ^= 1;
  noisy[11] ^= 1;
  noisy[27] ^= 1;
  noisy[40] ^= 1;
  const ExpertModel model = train_expert(x, noisy, 8, 3, 0.1, 1);
  REQUIRE(model.trees.size() == 8);

  // Rebuild the margin path one tree at a time and track the loss.
  std::vector<double> margin(x.rows(), model.base_score);
  std::vector<double> probs(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) probs[i] = sigmoid(margin[i]);
  double prev = mean_logistic_loss(noisy, probs);
  for (const RegressionTree& tree : model.trees) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      margin[i] += model.learning_rate * tree.predict(x.row(i));
      probs[i] = sigmoid(margin[i]);
    }
    const double loss = mean_logistic_loss(noisy, probs);
    CHECK(loss <= prev + 1e-12);
    prev = loss;
  }
}

TEST_CASE("expert probabilities agree with a manual tree walk") {
  const auto [x, y] = threshold_task(40, 83);
  const ExpertModel model = train_expert(x, y, 5, 3, 0.15, 1);
  Rng rng(101);
  Matrix queries(5, 2);
  for (std::size_t i = 0; i < 5; ++i) {
    queries(i, 0) = rng.uniform(-1.0, 1.0);
    queries(i, 1) = rng.uniform(-1.0, 1.0);
  }
  const std::vector<double> probs = expert_probabilities(model, queries);
  for (std::size_t i = 0; i < 5; ++i) {
    double margin = model.base_score;
    for (const RegressionTree& tree : model.trees)
      margin += model.learning_rate * walk_tree(tree, queries.row(i));
    CHECK(probs[i] == doctest::Approx(sigmoid(margin)).epsilon(1e-12));
  }
}

TEST_CASE("expert training validates arguments") {
  const auto [x, y] = threshold_task(12, 5);
  Matrix tiny(4, 2);
  const std::vector<std::uint8_t> tiny_y = {0, 1, 0, 1};
  CHECK_THROWS_WITH_AS(train_expert(tiny, tiny_y, 2, 2, 0.1, 1),
                       doctest::Contains("at least 10"), DataError);
  const std::vector<std::uint8_t> uniform(12, 1);
  CHECK_THROWS_WITH_AS(train_expert(x, uniform, 2, 2, 0.1, 1),
                       doctest::Contains("both classes"), DataError);
  CHECK_THROWS_AS(train_expert(x, y, 2, 0, 0.1, 1), std::invalid_argument);
  CHECK_THROWS_AS(train_expert(x, y, 2, 2, 0.0, 1), std::invalid_argument);
  const std::vector<std::uint8_t> short_y(11, 0);
  CHECK_THROWS_AS(train_expert(x, short_y, 2, 2, 0.1, 1), std::invalid_argument);
}

TEST_CASE("expert probabilities reject a mismatched feature width") {
  const auto [x, y] = threshold_task(12, 5);
  const ExpertModel model = train_expert(x, y, 2, 2, 0.1, 1);
  Matrix wide(3, 3);
  CHECK_THROWS_WITH_AS(expert_probabilities(model, wide),
                       doctest::Contains("width"), std::invalid_argument);
}

TEST_CASE("soft labels are clipped expert probabilities on the original rows") {
  const std::size_t n = 12;
  Dataset data;
  data.features = Matrix(n, 2);
  data.treatment.resize(n);
  data.hard_labels.resize(n);
  Rng rng(13);
  for (std::size_t i = 0; i < n; ++i) {
    data.features(i, 0) = rng.uniform(-1.0, 1.0);
    data.features(i, 1) = rng.uniform(-1.0, 1.0);
    data.treatment[i] = rng.uniform(-1.0, 1.0);
    data.hard_labels[i] = data.features(i, 0) + data.features(i, 1) > 0.0 ? 1 : 0;
  }
  // Enough capacity and rounds to memorize the training labels.
  const ExpertModel expert =
      train_expert(data.features, data.hard_labels, 200, 4, 0.3, 1);

  SUBCASE("a memorizing expert lands within the clip of each hard label") {
    const Dataset out = soft_label_dataset(data, expert, 0.05);
    REQUIRE(out.n() == n);
    CHECK(matrices_equal(out.features, data.features));
    CHECK(out.treatment == data.treatment);
    CHECK(out.hard_labels == data.hard_labels);
    for (std::size_t i = 0; i < n; ++i) {
      const double target = data.hard_labels[i] ? 1.0 : 0.0;
      CHECK(std::fabs(out.soft_probs[i] - target) <= 0.05 + 1e-12);
      CHECK((out.soft_probs[i] > 0.5) == (data.hard_labels[i] == 1));
    }
  }

  SUBCASE("an aggressive clip pins every probability into its band") {
    const Dataset out = soft_label_dataset(data, expert, 0.4);
    for (double p : out.soft_probs) {
      CHECK(p >= 0.4);
      CHECK(p <= 0.6);
    }
    // Log-odds targets built from the clipped labels stay inside the
    // bound the clip implies.
    const std::vector<double> targets = log_odds_targets(out, 1e-6);
    const double bound = -logit(0.4);
    for (double t : targets) {
      CHECK(std::isfinite(t));
      CHECK(std::fabs(t) <= bound + 1e-12);
    }
  }

  SUBCASE("validation") {
    Dataset unlabeled = data;
    unlabeled.hard_labels.clear();
    CHECK_THROWS_WITH_AS(soft_label_dataset(unlabeled, expert, 0.05),
                         doctest::Contains("hard"), DataError);
    CHECK_THROWS_AS(soft_label_dataset(data, expert, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(soft_label_dataset(data, expert, 0.5), std::invalid_argument);
  }
}
