#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ruleharvest/dataset.hpp"
#include "ruleharvest/ensemble.hpp"

namespace ruleharvest {

// Identity of the forest node a rule came from. The synthetic root rule
// (condition "always true") uses tree -1 so it sorts before real nodes.
struct NodeUid {
  int tree = -1;
  int node = 0;

  friend auto operator<=>(const NodeUid&, const NodeUid&) = default;
};

// A node expressed as {conditions => mu}: the conjunction of the root-to-node
// path tests, with same-feature conditions merged into at most one LE and one
// GT bound, plus the node mean and sample count recomputed on the training
// set. `weight` is zero until optimized.
struct Rule {
  NodeUid uid;
  std::vector<SplitTest> conditions;  // sorted by (feature, GT-before-LE)
  double mu = 0.0;
  int sample_count = 0;
  double weight = 0.0;

  bool matches(std::span<const double> x) const {
    for (const auto& c : conditions) {
      if (!c.matches(x)) return false;
    }
    return true;
  }
};

struct HarvestParams {
  int max_conditions = 5;
  int min_samples = 10;
  int max_candidates = 1500;
  uint64_t seed = 0;  // used only when subsampling an oversized candidate set
};

struct CandidateSet {
  std::vector<Rule> rules;          // rules[0] is the root rule
  std::vector<uint8_t> membership;  // n_rows x rules.size(), row-major
  int n_rows = 0;
  int dedup_count = 0;

  bool is_member(int row, int rule) const {
    return membership[static_cast<size_t>(row) * rules.size() + rule] != 0;
  }
};

// Enumerate every non-root node of every tree as a candidate rule, filter by
// condition count and support, drop exact duplicates, and subsample
// (seeded) if more than max_candidates survive. Node means and counts are
// recomputed on `d`, not on the bootstrap resamples the trees saw.
CandidateSet harvest_candidates(const Forest& f, const Dataset& d,
                                const HarvestParams& params);

struct SolverParams {
  int max_iterations = 10000;
  // Rules at or below this weight are dropped from the model. The default
  // only clears solver dust: with per-row renormalization a rule's global
  // weight understates its influence on rows with small active sets, so
  // aggressive thresholds can change predictions materially.
  double tolerance = 1e-8;
};

struct TrainingSummary {
  int n_rows = 0;
  double positive_fraction = 0.0;
  std::string target_column;
  double objective = 0.0;       // squared error of the returned weights
  double root_objective = 0.0;  // squared error of the root-only model
  int iterations = 0;
  int candidate_count = 0;
  int dedup_count = 0;
};

// The deployable classifier: selected positively weighted rules plus the
// always-retained root rule, with the feature quantile snapshot needed for
// ordinal rendering.
struct HarvestModel {
  std::vector<Rule> rules;  // rules[0] is the root
  std::vector<FeatureMeta> meta;
  std::vector<QuantileSummary> quantiles;
  double decision_threshold = 0.5;
  TrainingSummary summary;
};

// Minimize sum_i (y_i - p_i)^2 where p_i is the weighted average of active
// rule means, over weights >= 0. The per-row sum-to-one convention is
// absorbed by normalizing each row's active weights inside the objective.
// Projected gradient from the root-only start with monotone backtracking,
// plus an exact coordinate polish on small candidate sets; falls back to the
// root-only solution whenever that scores better.
HarvestModel optimize_weights(const CandidateSet& c, const Dataset& d,
                              const SolverParams& params = {});

// Weighted-average prediction over the active set G_x; returns the root mean
// when every active weight is zero.
double predict(const HarvestModel& m, std::span<const double> x);

enum class Decision { benign, malignant };

const char* to_string(Decision d);

// malignant iff p >= threshold.
Decision classify(double p, double threshold);

struct ActiveRule {
  int rule_index = 0;  // into HarvestModel::rules
  double weight = 0.0;
  double mu = 0.0;
  int sample_count = 0;
  int numeral = 0;  // 1..4 for the largest-weight active rules, else 0
};

struct Explanation {
  std::string case_id;
  std::vector<ActiveRule> active;  // weight descending, then NodeUid ascending
  double probability = 0.0;        // bit-identical to predict()
  Decision decision = Decision::benign;
};

Explanation explain(const HarvestModel& m, std::span<const double> x,
                    std::string case_id = "");

}  // namespace ruleharvest
