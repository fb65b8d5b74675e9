#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ruleharvest/dataset.hpp"
#include "ruleharvest/rng.hpp"
#include "ruleharvest/split_test.hpp"

namespace ruleharvest {

struct TreeNode {
  int id = 0;
  std::optional<SplitTest> split;  // absent at leaves
  double mean_response = 0.0;
  int sample_count = 0;
  int depth = 0;
  int left = -1;   // child routed by x <= threshold
  int right = -1;  // child routed by x > threshold
  int parent = -1;

  bool is_leaf() const { return !split.has_value(); }
};

// Root is always node id 0; children ids are assigned in depth-first order.
struct Tree {
  std::vector<TreeNode> nodes;
};

struct ForestParams {
  int n_trees = 300;
  int max_depth = 4;
  int min_samples_leaf = 10;
  int mtry = 0;  // 0 -> ceil(sqrt(n_features))
  bool bootstrap = true;
};

struct Forest {
  std::vector<Tree> trees;
  ForestParams params;
  uint64_t seed = 0;
};

struct TreeGrowParams {
  int max_depth = 4;
  int min_samples_leaf = 1;
  int mtry = 0;  // 0 -> all features
};

// Greedy CART over the given row multiset. Splits maximize the decrease in
// weighted sum of squared errors, which for 0/1 targets ranks candidates
// identically to Gini impurity decrease. Thresholds sit at midpoints of
// consecutive distinct values; ties break toward the lowest feature index,
// then the lowest threshold.
Tree grow_tree(const Dataset& d, std::span<const int> rows,
               const TreeGrowParams& params, Rng& rng);

// Same CART routine with an explicit target vector (one value per dataset
// row); used for residual fitting inside boosting.
Tree grow_tree_to_targets(const Dataset& d, std::span<const double> targets,
                          std::span<const int> rows,
                          const TreeGrowParams& params, Rng& rng);

double predict_tree(const Tree& t, std::span<const double> x);

// Bagged forest; tree t draws its rng stream from seed + t so parallel and
// serial builds produce identical models.
Forest grow_forest(const Dataset& d, const ForestParams& params, uint64_t seed,
                   int n_threads = 1);

double predict_forest(const Forest& f, std::span<const double> x);

enum class BoostLoss { logistic, squared };

struct BoostParams {
  int n_stages = 200;
  double learning_rate = 0.1;
  int max_depth = 2;
  int min_samples_leaf = 5;
  double holdout_fraction = 0.2;  // 0 disables early stopping
  int patience = 20;
};

// Stagewise gradient boosting. Stage trees store learning-rate-scaled leaf
// values; prediction is initial_score plus the sum of routed leaf values
// (sigmoid-transformed under logistic loss).
struct BoostedEnsemble {
  BoostLoss loss = BoostLoss::logistic;
  double initial_score = 0.0;
  double learning_rate = 0.1;
  std::vector<Tree> stages;
  std::vector<double> training_loss;  // per kept stage, on the fitting rows
};

BoostedEnsemble boost_fit(const Dataset& d, BoostLoss loss,
                          const BoostParams& params, uint64_t seed);

double boost_raw_score(const BoostedEnsemble& b, std::span<const double> x);
double boost_predict(const BoostedEnsemble& b, std::span<const double> x);

}  // namespace ruleharvest
