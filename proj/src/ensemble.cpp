#include "ruleharvest/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <thread>

#include "ruleharvest/errors.hpp"

namespace ruleharvest {

namespace {

constexpr double kMinGain = 1e-12;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct BestSplit {
  bool found = false;
  double gain = 0.0;
  int feature = 0;
  double threshold = 0.0;
};

// Carries everything the recursive builder needs; `targets` has one value per
// dataset row (0/1 for classification, residuals for boosting stages).
struct TreeBuilder {
  const Dataset& d;
  std::span<const double> targets;
  TreeGrowParams params;
  Rng& rng;
  std::vector<TreeNode> nodes;
  std::vector<int> feature_ids;          // scratch for mtry sampling
  std::vector<std::pair<double, double>> sorted;  // (value, target) scratch

  TreeBuilder(const Dataset& data, std::span<const double> t,
              const TreeGrowParams& p, Rng& r)
      : d(data), targets(t), params(p), rng(r) {
    feature_ids.resize(d.n_features);
    std::iota(feature_ids.begin(), feature_ids.end(), 0);
  }

  BestSplit search_split(std::span<const int> rows) {
    const int n = static_cast<int>(rows.size());
    BestSplit best;
    if (n < 2 * params.min_samples_leaf) return best;

    double total_sum = 0.0;
    for (int r : rows) total_sum += targets[r];

    int mtry = params.mtry > 0 ? std::min(params.mtry, d.n_features)
                               : d.n_features;
    // Partial Fisher-Yates over the shared id pool; draws are consumed in a
    // fixed order so the grown tree depends only on the rng stream.
    for (int i = 0; i < mtry; ++i) {
      const int j = i + static_cast<int>(rng.next_below(
                            static_cast<uint64_t>(d.n_features - i)));
      std::swap(feature_ids[i], feature_ids[j]);
    }

    for (int fi = 0; fi < mtry; ++fi) {
      const int f = feature_ids[fi];
      sorted.clear();
      for (int r : rows) sorted.emplace_back(d.value(r, f), targets[r]);
      std::sort(sorted.begin(), sorted.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });

      // Gain = sum of child (sum^2 / count) minus the parent term; for 0/1
      // targets this ranks splits identically to Gini impurity decrease.
      const double parent_term = total_sum * total_sum / n;
      double left_sum = 0.0;
      for (int i = 0; i + 1 < n; ++i) {
        left_sum += sorted[i].second;
        if (sorted[i].first == sorted[i + 1].first) continue;
        const int n_left = i + 1;
        const int n_right = n - n_left;
        if (n_left < params.min_samples_leaf || n_right < params.min_samples_leaf)
          continue;
        const double right_sum = total_sum - left_sum;
        const double gain = left_sum * left_sum / n_left +
                            right_sum * right_sum / n_right - parent_term;
        if (gain <= kMinGain) continue;
        const double threshold =
            sorted[i].first + 0.5 * (sorted[i + 1].first - sorted[i].first);
        const bool better =
            !best.found || gain > best.gain ||
            (gain == best.gain &&
             (f < best.feature ||
              (f == best.feature && threshold < best.threshold)));
        if (better) {
          best.found = true;
          best.gain = gain;
          best.feature = f;
          best.threshold = threshold;
        }
      }
    }
    return best;
  }

  int build(std::vector<int>& rows, int depth, int parent) {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    {
      TreeNode& node = nodes.back();
      node.id = id;
      node.parent = parent;
      node.depth = depth;
      node.sample_count = static_cast<int>(rows.size());
      double sum = 0.0;
      for (int r : rows) sum += targets[r];
      node.mean_response = sum / static_cast<double>(rows.size());
    }

    if (depth >= params.max_depth) return id;

    const BestSplit split = search_split(rows);
    if (!split.found) return id;

    std::vector<int> left_rows, right_rows;
    left_rows.reserve(rows.size());
    right_rows.reserve(rows.size());
    for (int r : rows) {
      (d.value(r, split.feature) <= split.threshold ? left_rows : right_rows)
          .push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    nodes[id].split = SplitTest{split.feature, split.threshold, SplitDirection::LE};
    const int left_id = build(left_rows, depth + 1, id);
    nodes[id].left = left_id;
    const int right_id = build(right_rows, depth + 1, id);
    nodes[id].right = right_id;
    return id;
  }
};

std::vector<double> dataset_targets(const Dataset& d) {
  std::vector<double> y(d.n_rows);
  if (d.target_kind == TargetKind::binary) {
    for (int r = 0; r < d.n_rows; ++r) y[r] = d.binary_target[r];
  } else if (d.target_kind == TargetKind::real) {
    for (int r = 0; r < d.n_rows; ++r) y[r] = d.real_target[r];
  } else {
    throw SchemaError("tree growing needs a binary or real target");
  }
  return y;
}

void validate_grow_params(const TreeGrowParams& p) {
  if (p.max_depth < 1) throw UsageError("max_depth must be >= 1");
  if (p.min_samples_leaf < 1) throw UsageError("min_samples_leaf must be >= 1");
}

// Leaf index reached by row r; used for per-stage leaf statistics.
int route_to_leaf(const Tree& t, const Dataset& d, int r) {
  int id = 0;
  while (!t.nodes[id].is_leaf()) {
    const auto& s = *t.nodes[id].split;
    id = d.value(r, s.feature_index) <= s.threshold ? t.nodes[id].left
                                                    : t.nodes[id].right;
  }
  return id;
}

void parallel_for(int n, int n_threads, const std::function<void(int)>& fn) {
  n_threads = std::max(1, std::min(n_threads, n));
  if (n_threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(n_threads);
  for (int w = 0; w < n_threads; ++w) {
    workers.emplace_back([&, w] {
      for (int i = w; i < n; i += n_threads) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

}  // namespace

Tree grow_tree(const Dataset& d, std::span<const int> rows,
               const TreeGrowParams& params, Rng& rng) {
  const std::vector<double> y = dataset_targets(d);
  return grow_tree_to_targets(d, y, rows, params, rng);
}

Tree grow_tree_to_targets(const Dataset& d, std::span<const double> targets,
                          std::span<const int> rows,
                          const TreeGrowParams& params, Rng& rng) {
  validate_grow_params(params);
  if (rows.empty()) throw FitError("cannot grow a tree on an empty row subset");
  if (targets.size() != static_cast<size_t>(d.n_rows)) {
    throw UsageError("target vector length must match the dataset rows");
  }
  TreeBuilder builder(d, targets, params, rng);
  std::vector<int> root_rows(rows.begin(), rows.end());
  builder.build(root_rows, 0, -1);
  Tree t;
  t.nodes = std::move(builder.nodes);
  return t;
}

double predict_tree(const Tree& t, std::span<const double> x) {
  int id = 0;
  while (!t.nodes[id].is_leaf()) {
    const auto& s = *t.nodes[id].split;
    id = s.matches(x) ? t.nodes[id].left : t.nodes[id].right;
  }
  return t.nodes[id].mean_response;
}

Forest grow_forest(const Dataset& d, const ForestParams& params, uint64_t seed,
                   int n_threads) {
  if (params.n_trees < 1) throw UsageError("n_trees must be >= 1");
  if (params.mtry < 0 || params.mtry > d.n_features) {
    throw UsageError("mtry must lie in [1, n_features] (0 selects sqrt)");
  }
  TreeGrowParams grow;
  grow.max_depth = params.max_depth;
  grow.min_samples_leaf = params.min_samples_leaf;
  grow.mtry = params.mtry > 0
                  ? params.mtry
                  : static_cast<int>(std::ceil(std::sqrt(
                        static_cast<double>(d.n_features))));
  validate_grow_params(grow);

  const std::vector<double> y = dataset_targets(d);

  Forest f;
  f.params = params;
  f.seed = seed;
  f.trees.resize(params.n_trees);
  // Stream per tree is seed + index, so thread count cannot change the model.
  parallel_for(params.n_trees, n_threads, [&](int t) {
    Rng rng(seed + static_cast<uint64_t>(t));
    std::vector<int> rows(d.n_rows);
    if (params.bootstrap) {
      for (int i = 0; i < d.n_rows; ++i) {
        rows[i] = static_cast<int>(rng.next_below(static_cast<uint64_t>(d.n_rows)));
      }
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    f.trees[t] = grow_tree_to_targets(d, y, rows, grow, rng);
  });
  return f;
}

double predict_forest(const Forest& f, std::span<const double> x) {
  double sum = 0.0;
  for (const auto& t : f.trees) sum += predict_tree(t, x);
  return sum / static_cast<double>(f.trees.size());
}

BoostedEnsemble boost_fit(const Dataset& d, BoostLoss loss,
                          const BoostParams& params, uint64_t seed) {
  if (params.n_stages < 1) throw UsageError("n_stages must be >= 1");
  if (params.learning_rate <= 0.0 || params.learning_rate > 1.0) {
    throw UsageError("learning_rate must lie in (0, 1]");
  }
  if (params.holdout_fraction < 0.0 || params.holdout_fraction > 0.9) {
    throw UsageError("holdout_fraction must lie in [0, 0.9]");
  }
  if (params.patience < 1) throw UsageError("patience must be >= 1");
  if (loss == BoostLoss::logistic && d.target_kind != TargetKind::binary) {
    throw SchemaError("logistic boosting needs a binary target");
  }
  if (loss == BoostLoss::squared && d.target_kind != TargetKind::real) {
    throw SchemaError("squared-loss boosting needs a real target");
  }

  const std::vector<double> y = dataset_targets(d);

  // Deterministic holdout split for early stopping.
  std::vector<int> order(d.n_rows);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(seed, 0));
  split_rng.shuffle(order);
  int n_holdout = static_cast<int>(
      std::floor(params.holdout_fraction * static_cast<double>(d.n_rows)));
  if (d.n_rows - n_holdout < 1) n_holdout = 0;
  std::vector<int> holdout(order.begin(), order.begin() + n_holdout);
  std::vector<int> train(order.begin() + n_holdout, order.end());
  std::sort(train.begin(), train.end());
  std::sort(holdout.begin(), holdout.end());

  BoostedEnsemble model;
  model.loss = loss;
  model.learning_rate = params.learning_rate;

  if (loss == BoostLoss::logistic) {
    double pos = 0.0;
    for (int r : train) pos += y[r];
    const double rate = pos / static_cast<double>(train.size());
    if (rate <= 0.0 || rate >= 1.0) {
      throw FitError("logistic boosting needs both classes in the training rows");
    }
    model.initial_score = std::log(rate / (1.0 - rate));
  } else {
    double sum = 0.0;
    for (int r : train) sum += y[r];
    model.initial_score = sum / static_cast<double>(train.size());
  }

  std::vector<double> score(d.n_rows, model.initial_score);
  std::vector<double> residual(d.n_rows, 0.0);

  const auto loss_over = [&](const std::vector<int>& rows) {
    if (rows.empty()) return 0.0;
    double total = 0.0;
    if (loss == BoostLoss::logistic) {
      for (int r : rows) {
        const double p = std::clamp(sigmoid(score[r]), 1e-12, 1.0 - 1e-12);
        total += y[r] == 1.0 ? -std::log(p) : -std::log(1.0 - p);
      }
    } else {
      for (int r : rows) {
        const double e = y[r] - score[r];
        total += e * e;
      }
    }
    return total / static_cast<double>(rows.size());
  };

  TreeGrowParams grow;
  grow.max_depth = params.max_depth;
  grow.min_samples_leaf = params.min_samples_leaf;
  grow.mtry = 0;  // boosting uses every feature at every split
  Rng tree_rng(derive_seed(seed, 1));

  double best_holdout = std::numeric_limits<double>::infinity();
  int best_stage_count = 0;
  int stale = 0;

  for (int stage = 0; stage < params.n_stages; ++stage) {
    for (int r : train) {
      residual[r] = loss == BoostLoss::logistic ? y[r] - sigmoid(score[r])
                                                : y[r] - score[r];
    }
    Tree tree = grow_tree_to_targets(d, residual, train, grow, tree_rng);

    // Per-leaf updates: plain mean for squared loss, a clamped Newton step
    // for logistic, both scaled by the learning rate.
    const size_t n_nodes = tree.nodes.size();
    std::vector<double> num(n_nodes, 0.0), den(n_nodes, 0.0);
    std::vector<int> leaf_of(train.size());
    for (size_t i = 0; i < train.size(); ++i) {
      const int r = train[i];
      const int leaf = route_to_leaf(tree, d, r);
      leaf_of[i] = leaf;
      num[leaf] += residual[r];
      if (loss == BoostLoss::logistic) {
        const double p = sigmoid(score[r]);
        den[leaf] += p * (1.0 - p);
      } else {
        den[leaf] += 1.0;
      }
    }
    for (auto& node : tree.nodes) {
      if (!node.is_leaf()) continue;
      double step = num[node.id] / std::max(den[node.id], 1e-12);
      step = std::clamp(step, -8.0, 8.0);
      node.mean_response = params.learning_rate * step;
    }

    for (size_t i = 0; i < train.size(); ++i) {
      score[train[i]] += tree.nodes[leaf_of[i]].mean_response;
    }
    for (int r : holdout) {
      score[r] += predict_tree(tree, d.row(r));
    }

    model.stages.push_back(std::move(tree));
    model.training_loss.push_back(loss_over(train));

    if (!holdout.empty()) {
      const double h = loss_over(holdout);
      if (h < best_holdout) {
        best_holdout = h;
        best_stage_count = static_cast<int>(model.stages.size());
        stale = 0;
      } else if (++stale >= params.patience) {
        break;
      }
    }
  }

  if (!holdout.empty() && best_stage_count > 0) {
    model.stages.resize(best_stage_count);
    model.training_loss.resize(best_stage_count);
  }
  return model;
}

double boost_raw_score(const BoostedEnsemble& b, std::span<const double> x) {
  double score = b.initial_score;
  for (const auto& t : b.stages) score += predict_tree(t, x);
  return score;
}

double boost_predict(const BoostedEnsemble& b, std::span<const double> x) {
  const double raw = boost_raw_score(b, x);
  return b.loss == BoostLoss::logistic ? sigmoid(raw) : raw;
}

}  // namespace ruleharvest
