#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ruleharvest/ensemble.hpp"
#include "ruleharvest/errors.hpp"
#include "ruleharvest/model_io.hpp"

using namespace ruleharvest;

namespace {

Dataset dataset_1d(std::vector<double> x, std::vector<int> y) {
  Dataset d;
  d.n_rows = static_cast<int>(x.size());
  d.n_features = 1;
  d.features = std::move(x);
  d.target_kind = TargetKind::binary;
  d.binary_target = std::move(y);
  d.meta.push_back({"f0", FeatureGroup::derived, 0});
  for (int r = 0; r < d.n_rows; ++r) d.row_ids.push_back(std::to_string(r));
  return d;
}

Dataset dataset_1d_real(std::vector<double> x, std::vector<double> y) {
  Dataset d;
  d.n_rows = static_cast<int>(x.size());
  d.n_features = 1;
  d.features = std::move(x);
  d.target_kind = TargetKind::real;
  d.real_target = std::move(y);
  d.meta.push_back({"f0", FeatureGroup::derived, 0});
  for (int r = 0; r < d.n_rows; ++r) d.row_ids.push_back(std::to_string(r));
  return d;
}

std::vector<int> all_rows(const Dataset& d) {
  std::vector<int> rows(d.n_rows);
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

void check_counts(const Tree& t, int id) {
  const TreeNode& n = t.nodes[id];
  if (n.is_leaf()) {
    CHECK(n.left == -1);
    CHECK(n.right == -1);
    return;
  }
  CHECK(n.sample_count ==
        t.nodes[n.left].sample_count + t.nodes[n.right].sample_count);
  CHECK(t.nodes[n.left].parent == id);
  CHECK(t.nodes[n.right].parent == id);
  check_counts(t, n.left);
  check_counts(t, n.right);
}

}  // namespace

TEST_CASE("grow_tree returns a single leaf on a pure node") {
  const Dataset d = dataset_1d({1, 2, 3}, {1, 1, 1});
  Rng rng(0);
  const Tree t = grow_tree(d, all_rows(d), {.max_depth = 4, .min_samples_leaf = 1}, rng);
  CHECK(t.nodes.size() == 1);
  CHECK(t.nodes[0].is_leaf());
  CHECK(t.nodes[0].mean_response == 1.0);
}

TEST_CASE("grow_tree finds the exhaustive-search split on 1-D data") {
  // Candidate thresholds are 0.5, 1.5 and 2.5; 1.5 separates perfectly.
  const Dataset d = dataset_1d({0, 1, 2, 3}, {0, 0, 1, 1});
  Rng rng(0);
  const Tree t = grow_tree(d, all_rows(d), {.max_depth = 4, .min_samples_leaf = 1}, rng);
  REQUIRE(t.nodes[0].split.has_value());
  CHECK(t.nodes[0].split->feature_index == 0);
  CHECK(t.nodes[0].split->threshold == 1.5);
  CHECK(t.nodes[t.nodes[0].left].mean_response == 0.0);
  CHECK(t.nodes[t.nodes[0].right].mean_response == 1.0);
  CHECK(t.nodes[0].mean_response == 0.5);  // root mean = positive fraction

  SUBCASE("routing is inclusive at the threshold") {
    const std::vector<double> at_threshold = {1.5};
    CHECK(predict_tree(t, at_threshold) == 0.0);
    const std::vector<double> below = {0.7};
    CHECK(predict_tree(t, below) == 0.0);
    const std::vector<double> above = {1.6};
    CHECK(predict_tree(t, above) == 1.0);
  }
}

TEST_CASE("grow_tree respects max_depth") {
  const Dataset d = synthesize({.n_rows = 200, .n_features = 4}, 3);
  Rng rng(1);
  const Tree t = grow_tree(d, all_rows(d), {.max_depth = 1, .min_samples_leaf = 1}, rng);
  CHECK(t.nodes.size() <= 3);
  for (const auto& n : t.nodes) CHECK(n.depth <= 1);
}

TEST_CASE("tree invariants on random data") {
  SynthSpec spec;
  spec.n_rows = 300;
  spec.n_features = 6;
  spec.planted_rules = {{{{0, 0.4, SplitDirection::LE}}, 0.85}};
  spec.base_rate = 0.25;
  const Dataset d = synthesize(spec, 11);
  Rng rng(2);
  const Tree t = grow_tree(d, all_rows(d), {.max_depth = 5, .min_samples_leaf = 3}, rng);
  check_counts(t, 0);
  CHECK(t.nodes[0].mean_response == d.positive_fraction());
  for (const auto& n : t.nodes) {
    CHECK(n.mean_response >= 0.0);
    CHECK(n.mean_response <= 1.0);
    if (!n.is_leaf()) {
      CHECK(t.nodes[n.left].sample_count >= 3);
      CHECK(t.nodes[n.right].sample_count >= 3);
    }
  }
}

TEST_CASE("grow_tree rejects an empty subset") {
  const Dataset d = dataset_1d({1, 2}, {0, 1});
  Rng rng(0);
  const std::vector<int> empty;
  CHECK_THROWS_AS(grow_tree(d, empty, {.max_depth = 2, .min_samples_leaf = 1}, rng),
                  FitError);
}

TEST_CASE("degenerate forest equals a single tree") {
  const Dataset d = dataset_1d({0, 1, 2, 3}, {0, 0, 1, 1});
  ForestParams params;
  params.n_trees = 1;
  params.bootstrap = false;
  params.mtry = 1;
  params.max_depth = 4;
  params.min_samples_leaf = 1;
  const Forest f = grow_forest(d, params, 42);
  Rng rng(42);  // tree 0 stream is seed + 0
  const Tree t = grow_tree(d, all_rows(d), {.max_depth = 4, .min_samples_leaf = 1, .mtry = 1}, rng);
  Forest wrapped;
  wrapped.trees = {t};
  wrapped.params = params;
  wrapped.seed = 42;
  CHECK(forest_to_json(f).dump() == forest_to_json(wrapped).dump());
}

TEST_CASE("forest determinism and thread independence") {
  SynthSpec spec;
  spec.n_rows = 150;
  spec.n_features = 5;
  spec.planted_rules = {{{{1, 0.5, SplitDirection::GT}}, 0.9}};
  spec.base_rate = 0.2;
  const Dataset d = synthesize(spec, 8);
  ForestParams params;
  params.n_trees = 20;
  params.max_depth = 3;
  params.min_samples_leaf = 2;
  const Forest a = grow_forest(d, params, 5, 1);
  const Forest b = grow_forest(d, params, 5, 2);
  const Forest c = grow_forest(d, params, 5, 1);
  CHECK(forest_to_json(a).dump() == forest_to_json(b).dump());
  CHECK(forest_to_json(a).dump() == forest_to_json(c).dump());
  const Forest other = grow_forest(d, params, 6, 1);
  CHECK(forest_to_json(a).dump() != forest_to_json(other).dump());
}

TEST_CASE("stump forest concentrates on the informative feature") {
  // 20 rows make a pure bootstrap resample vanishingly unlikely.
  std::vector<double> x(20);
  std::vector<int> y(20);
  for (int i = 0; i < 20; ++i) {
    x[i] = i;
    y[i] = i >= 10 ? 1 : 0;
  }
  const Dataset d = dataset_1d(std::move(x), std::move(y));
  ForestParams params;
  params.n_trees = 50;
  params.max_depth = 1;
  params.min_samples_leaf = 1;
  params.mtry = 1;
  const Forest f = grow_forest(d, params, 12);
  int split_f0 = 0;
  for (const auto& t : f.trees) {
    if (t.nodes[0].split.has_value() && t.nodes[0].split->feature_index == 0) {
      ++split_f0;
    }
  }
  CHECK(split_f0 >= 45);  // >= 90%

  const std::vector<double> far_right = {19.0};
  CHECK(predict_forest(f, far_right) >= 0.9);
}

TEST_CASE("predict_forest averages tree predictions") {
  Tree leaf_a;
  leaf_a.nodes.push_back({0, std::nullopt, 0.2, 10, 0, -1, -1, -1});
  Tree leaf_b;
  leaf_b.nodes.push_back({0, std::nullopt, 0.8, 10, 0, -1, -1, -1});
  Forest f;
  f.trees = {leaf_a, leaf_b};
  const std::vector<double> x = {0.0};
  CHECK(predict_forest(f, x) == 0.5);

  Forest single;
  single.trees = {leaf_a};
  CHECK(predict_forest(single, x) == predict_tree(leaf_a, x));
}

TEST_CASE("squared-loss boosting beats the mean and decreases monotonically") {
  const Dataset d = dataset_1d_real({1, 2, 3, 4}, {1, 2, 3, 4});
  BoostParams params;
  params.n_stages = 1;
  params.learning_rate = 1.0;
  params.max_depth = 1;
  params.min_samples_leaf = 1;
  params.holdout_fraction = 0.0;
  const BoostedEnsemble b = boost_fit(d, BoostLoss::squared, params, 0);

  double sse_model = 0.0, sse_mean = 0.0;
  const double mean = 2.5;
  for (int r = 0; r < d.n_rows; ++r) {
    const double pred = boost_predict(b, d.row(r));
    sse_model += (d.real_target[r] - pred) * (d.real_target[r] - pred);
    sse_mean += (d.real_target[r] - mean) * (d.real_target[r] - mean);
  }
  CHECK(std::sqrt(sse_model / 4) < std::sqrt(sse_mean / 4));
}

TEST_CASE("boosting validates its parameters and targets") {
  const Dataset d = dataset_1d({0, 1, 2, 3}, {0, 0, 1, 1});
  BoostParams params;
  params.n_stages = 0;
  CHECK_THROWS_AS(boost_fit(d, BoostLoss::logistic, params, 0), UsageError);

  BoostParams ok;
  ok.holdout_fraction = 0.0;
  const Dataset all_pos = dataset_1d({0, 1, 2}, {1, 1, 1});
  CHECK_THROWS_AS(boost_fit(all_pos, BoostLoss::logistic, ok, 0), FitError);

  CHECK_THROWS_AS(boost_fit(d, BoostLoss::squared, ok, 0), SchemaError);
  const Dataset real = dataset_1d_real({0, 1}, {1, 2});
  CHECK_THROWS_AS(boost_fit(real, BoostLoss::logistic, ok, 0), SchemaError);
}

TEST_CASE("logistic boosting separates separable data") {
  std::vector<double> x(20);
  std::vector<int> y(20);
  for (int i = 0; i < 20; ++i) {
    x[i] = i;
    y[i] = i >= 10 ? 1 : 0;
  }
  const Dataset d = dataset_1d(std::move(x), std::move(y));
  BoostParams params;
  params.n_stages = 20;
  params.learning_rate = 0.1;
  params.max_depth = 1;
  params.min_samples_leaf = 1;
  params.holdout_fraction = 0.0;
  const BoostedEnsemble b = boost_fit(d, BoostLoss::logistic, params, 0);

  int correct = 0;
  for (int r = 0; r < d.n_rows; ++r) {
    const double p = boost_predict(b, d.row(r));
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    if ((p >= 0.5) == (d.binary_target[r] == 1)) ++correct;
  }
  CHECK(correct == d.n_rows);

  // Training logloss never increases at this learning rate.
  for (size_t s = 1; s < b.training_loss.size(); ++s) {
    CHECK(b.training_loss[s] <= b.training_loss[s - 1] + 1e-12);
  }

  const std::vector<double> deep_positive = {18.5};
  CHECK(boost_predict(b, deep_positive) > 0.5);
}

TEST_CASE("squared-loss training MSE is non-increasing stage by stage") {
  RegressionSynthSpec spec;
  spec.n_rows = 250;
  spec.n_features = 4;
  const Dataset d = synthesize_regression(spec, 21);
  BoostParams params;
  params.n_stages = 60;
  params.learning_rate = 0.3;
  params.max_depth = 2;
  params.min_samples_leaf = 2;
  params.holdout_fraction = 0.0;
  const BoostedEnsemble b = boost_fit(d, BoostLoss::squared, params, 1);
  REQUIRE(b.training_loss.size() == 60);
  for (size_t s = 1; s < b.training_loss.size(); ++s) {
    CHECK(b.training_loss[s] <= b.training_loss[s - 1] + 1e-12);
  }
}

TEST_CASE("boost_predict is the base rate when trees carry no signal") {
  // Constant feature: no split exists, every stage contributes zero.
  const Dataset d = dataset_1d({5, 5, 5, 5}, {1, 0, 1, 0});
  BoostParams params;
  params.n_stages = 3;
  params.holdout_fraction = 0.0;
  params.min_samples_leaf = 1;
  const BoostedEnsemble b = boost_fit(d, BoostLoss::logistic, params, 0);
  const std::vector<double> x = {5.0};
  CHECK(boost_predict(b, x) == 0.5);

  SUBCASE("appending an all-zero stage changes nothing") {
    BoostedEnsemble extended = b;
    Tree zero;
    zero.nodes.push_back({0, std::nullopt, 0.0, 4, 0, -1, -1, -1});
    extended.stages.push_back(zero);
    CHECK(boost_predict(extended, x) == boost_predict(b, x));
  }
}

TEST_CASE("early stopping truncates to the best holdout stage") {
  RegressionSynthSpec spec;
  spec.n_rows = 400;
  spec.n_features = 3;
  spec.noise_sigma = 0.5;
  const Dataset d = synthesize_regression(spec, 33);
  BoostParams params;
  params.n_stages = 150;
  params.learning_rate = 0.3;
  params.max_depth = 3;
  params.min_samples_leaf = 2;
  params.holdout_fraction = 0.2;
  params.patience = 10;
  const BoostedEnsemble b = boost_fit(d, BoostLoss::squared, params, 7);
  CHECK(b.stages.size() < 150);  // noisy data stops early
  CHECK(b.stages.size() >= 1);
  CHECK(b.training_loss.size() == b.stages.size());
}
