#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "oracles.hpp"
#include "ruleharvest/errors.hpp"
#include "ruleharvest/nodeharvest.hpp"
#include "ruleharvest/rng.hpp"

using namespace ruleharvest;

namespace {

Dataset grid_2d(int reps) {
  // Four cells of an AND pattern: positive only when both features are high.
  Dataset d;
  d.n_features = 2;
  d.target_kind = TargetKind::binary;
  const double vals[4][2] = {{0.25, 0.25}, {0.25, 0.75}, {0.75, 0.25}, {0.75, 0.75}};
  int row = 0;
  for (int rep = 0; rep < reps; ++rep) {
    for (int c = 0; c < 4; ++c) {
      d.features.push_back(vals[c][0]);
      d.features.push_back(vals[c][1]);
      d.binary_target.push_back(c == 3 ? 1 : 0);
      d.row_ids.push_back(std::to_string(row++));
    }
  }
  d.n_rows = row;
  d.meta.push_back({"f0", FeatureGroup::derived, 0});
  d.meta.push_back({"f1", FeatureGroup::derived, 1});
  return d;
}

Forest single_stump(double threshold, double mu_left, double mu_right) {
  Tree t;
  t.nodes.push_back({0, SplitTest{0, threshold, SplitDirection::LE}, 0.5, 4, 0, 1, 2, -1});
  t.nodes.push_back({1, std::nullopt, mu_left, 2, 1, -1, -1, 0});
  t.nodes.push_back({2, std::nullopt, mu_right, 2, 1, -1, -1, 0});
  Forest f;
  f.trees = {t};
  return f;
}

oracles::GridInstance to_grid_instance(const CandidateSet& c, const Dataset& d) {
  oracles::GridInstance g;
  g.n_rows = c.n_rows;
  g.mu.resize(c.rules.size());
  for (size_t j = 0; j < c.rules.size(); ++j) g.mu[j] = c.rules[j].mu;
  g.active.resize(c.n_rows);
  for (int r = 0; r < c.n_rows; ++r) {
    for (size_t j = 0; j < c.rules.size(); ++j) {
      if (c.is_member(r, static_cast<int>(j))) g.active[r].push_back(static_cast<int>(j));
    }
  }
  for (int r = 0; r < d.n_rows; ++r) g.y.push_back(d.binary_target[r]);
  return g;
}

double model_objective_via_oracle(const HarvestModel& m, const Dataset& d) {
  // Evaluate the stored model with the oracle's own formula.
  double total = 0.0;
  for (int r = 0; r < d.n_rows; ++r) {
    double num = 0.0, den = 0.0;
    for (const auto& rule : m.rules) {
      if (rule.matches(d.row(r))) {
        num += rule.weight * rule.mu;
        den += rule.weight;
      }
    }
    const double p = den > 0.0 ? num / den : m.rules[0].mu;
    const double e = d.binary_target[r] - p;
    total += e * e;
  }
  return total;
}

// Random small instance for solver-vs-grid checks; rule 0 is the root.
oracles::GridInstance random_instance(Rng& rng, int n_rows, int n_rules) {
  oracles::GridInstance g;
  g.n_rows = n_rows;
  g.mu.resize(n_rules);
  g.mu[0] = 0.3 + 0.4 * rng.next_unit();
  for (int j = 1; j < n_rules; ++j) g.mu[j] = rng.next_unit();
  g.active.resize(n_rows);
  for (int r = 0; r < n_rows; ++r) {
    g.active[r].push_back(0);
    for (int j = 1; j < n_rules; ++j) {
      if (rng.next_unit() < 0.45) g.active[r].push_back(j);
    }
    g.y.push_back(rng.next_unit() < 0.5 ? 0.0 : 1.0);
  }
  return g;
}

// Wrap a raw instance into library types so optimize_weights can run on it.
struct WrappedInstance {
  CandidateSet candidates;
  Dataset data;
};

WrappedInstance wrap_instance(const oracles::GridInstance& g) {
  WrappedInstance w;
  w.data.n_rows = g.n_rows;
  w.data.n_features = 1;
  w.data.target_kind = TargetKind::binary;
  for (int r = 0; r < g.n_rows; ++r) {
    w.data.features.push_back(0.0);
    w.data.binary_target.push_back(g.y[r] == 1.0 ? 1 : 0);
    w.data.row_ids.push_back(std::to_string(r));
  }
  w.data.meta.push_back({"f0", FeatureGroup::derived, 0});

  const int n_rules = static_cast<int>(g.mu.size());
  w.candidates.n_rows = g.n_rows;
  w.candidates.dedup_count = 0;
  w.candidates.membership.assign(
      static_cast<size_t>(g.n_rows) * n_rules, 0);
  for (int r = 0; r < g.n_rows; ++r) {
    for (int j : g.active[r]) {
      w.candidates.membership[static_cast<size_t>(r) * n_rules + j] = 1;
    }
  }
  for (int j = 0; j < n_rules; ++j) {
    Rule rule;
    rule.uid = j == 0 ? NodeUid{-1, 0} : NodeUid{0, j};
    if (j > 0) {
      // Synthetic marker condition; membership comes from the matrix, and
      // the solver only reads mu and the matrix.
      rule.conditions.push_back({0, static_cast<double>(j), SplitDirection::LE});
    }
    rule.mu = g.mu[j];
    int count = 0;
    for (int r = 0; r < g.n_rows; ++r) {
      count += w.candidates.membership[static_cast<size_t>(r) * n_rules + j];
    }
    rule.sample_count = count;
    w.candidates.rules.push_back(std::move(rule));
  }
  return w;
}

}  // namespace

TEST_CASE("harvest_candidates enumerates stump rules") {
  Dataset d;
  d.n_rows = 4;
  d.n_features = 1;
  d.features = {0, 1, 2, 3};
  d.target_kind = TargetKind::binary;
  d.binary_target = {0, 0, 1, 1};
  d.meta.push_back({"f0", FeatureGroup::derived, 0});
  for (int r = 0; r < 4; ++r) d.row_ids.push_back(std::to_string(r));

  const Forest f = single_stump(1.5, 0.0, 1.0);
  HarvestParams params;
  params.min_samples = 1;
  const CandidateSet c = harvest_candidates(f, d, params);

  REQUIRE(c.rules.size() == 3);
  CHECK(c.rules[0].conditions.empty());
  CHECK(c.rules[0].mu == 0.5);
  CHECK(c.rules[0].sample_count == 4);
  CHECK(c.rules[1].conditions.size() == 1);
  CHECK(c.rules[1].conditions[0].direction == SplitDirection::LE);
  CHECK(c.rules[1].mu == 0.0);
  CHECK(c.rules[1].sample_count == 2);
  CHECK(c.rules[2].conditions[0].direction == SplitDirection::GT);
  CHECK(c.rules[2].mu == 1.0);
  CHECK(c.dedup_count == 0);

  // Membership invariants.
  for (int r = 0; r < 4; ++r) CHECK(c.is_member(r, 0));
  for (size_t j = 0; j < c.rules.size(); ++j) {
    int count = 0;
    for (int r = 0; r < 4; ++r) count += c.is_member(r, static_cast<int>(j));
    CHECK(count == c.rules[j].sample_count);
  }
}

TEST_CASE("identical trees deduplicate") {
  Dataset d;
  d.n_rows = 4;
  d.n_features = 1;
  d.features = {0, 1, 2, 3};
  d.target_kind = TargetKind::binary;
  d.binary_target = {0, 0, 1, 1};
  d.meta.push_back({"f0", FeatureGroup::derived, 0});
  for (int r = 0; r < 4; ++r) d.row_ids.push_back(std::to_string(r));

  Forest f = single_stump(1.5, 0.0, 1.0);
  f.trees.push_back(f.trees[0]);  // identical stump twice
  HarvestParams params;
  params.min_samples = 1;
  const CandidateSet c = harvest_candidates(f, d, params);
  CHECK(c.rules.size() == 3);
  CHECK(c.dedup_count == 2);
}

TEST_CASE("max_conditions filters deep rules") {
  const Dataset d = grid_2d(5);  // 20 rows
  Rng rng(1);
  std::vector<int> rows(d.n_rows);
  std::iota(rows.begin(), rows.end(), 0);
  const Tree t = grow_tree(d, rows, {.max_depth = 2, .min_samples_leaf = 1, .mtry = 2}, rng);
  Forest f;
  f.trees = {t};

  HarvestParams all;
  all.min_samples = 1;
  const CandidateSet full = harvest_candidates(f, d, all);
  // AND-pattern tree: root split plus one informative child split.
  CHECK(full.rules.size() == 5);

  HarvestParams narrow;
  narrow.min_samples = 1;
  narrow.max_conditions = 1;
  const CandidateSet filtered = harvest_candidates(f, d, narrow);
  CHECK(filtered.rules.size() == 3);  // root + the two depth-1 rules
  for (const auto& r : filtered.rules) CHECK(r.conditions.size() <= 1);
}

TEST_CASE("min_samples filters low-support rules") {
  const Dataset d = grid_2d(5);
  const Forest f = single_stump(0.5, 0.0, 1.0);
  HarvestParams params;
  params.min_samples = 11;  // each side has exactly 10 rows
  const CandidateSet c = harvest_candidates(f, d, params);
  CHECK(c.rules.size() == 1);  // only the root survives
}

TEST_CASE("max_candidates subsampling is seeded and keeps the root") {
  SynthSpec spec;
  spec.n_rows = 200;
  spec.n_features = 6;
  spec.planted_rules = {{{{0, 0.5, SplitDirection::LE}}, 0.9}};
  spec.base_rate = 0.1;
  const Dataset d = synthesize(spec, 3);
  ForestParams fp;
  fp.n_trees = 30;
  fp.max_depth = 3;
  fp.min_samples_leaf = 5;
  const Forest f = grow_forest(d, fp, 9);

  HarvestParams params;
  params.min_samples = 5;
  params.max_candidates = 10;
  params.seed = 77;
  const CandidateSet a = harvest_candidates(f, d, params);
  const CandidateSet b = harvest_candidates(f, d, params);
  REQUIRE(a.rules.size() == 10);
  CHECK(a.rules[0].conditions.empty());
  for (size_t j = 0; j < a.rules.size(); ++j) {
    CHECK(a.rules[j].uid == b.rules[j].uid);
  }

  params.seed = 78;
  const CandidateSet c = harvest_candidates(f, d, params);
  bool any_difference = false;
  for (size_t j = 0; j < c.rules.size(); ++j) {
    if (!(c.rules[j].uid == a.rules[j].uid)) any_difference = true;
  }
  CHECK(any_difference);
}

TEST_CASE("merged conditions form intervals and memberships nest") {
  const Dataset d = grid_2d(8);
  Rng rng(5);
  std::vector<int> rows(d.n_rows);
  std::iota(rows.begin(), rows.end(), 0);
  const Tree t = grow_tree(d, rows, {.max_depth = 4, .min_samples_leaf = 1, .mtry = 2}, rng);
  Forest f;
  f.trees = {t};
  HarvestParams params;
  params.min_samples = 1;
  const CandidateSet c = harvest_candidates(f, d, params);

  for (const auto& rule : c.rules) {
    // At most one LE and one GT per feature after merging.
    std::set<std::pair<int, SplitDirection>> keys;
    for (const auto& cond : rule.conditions) {
      CHECK(keys.emplace(cond.feature_index, cond.direction).second);
    }
  }

  // Monotone membership: more specific rules cover a subset of rows.
  for (size_t a = 0; a < c.rules.size(); ++a) {
    for (size_t b = 0; b < c.rules.size(); ++b) {
      if (a == b) continue;
      const auto& ca = c.rules[a].conditions;
      const auto& cb = c.rules[b].conditions;
      const bool a_superset =
          std::all_of(cb.begin(), cb.end(), [&](const SplitTest& s) {
            return std::find(ca.begin(), ca.end(), s) != ca.end();
          });
      if (!a_superset) continue;
      CHECK(c.rules[a].sample_count <= c.rules[b].sample_count);
      for (int r = 0; r < c.n_rows; ++r) {
        if (c.is_member(r, static_cast<int>(a))) {
          CHECK(c.is_member(r, static_cast<int>(b)));
        }
      }
    }
  }
}

TEST_CASE("optimize_weights with only the root predicts the base rate") {
  Dataset d;
  d.n_rows = 627;
  d.n_features = 1;
  d.target_kind = TargetKind::binary;
  for (int r = 0; r < 627; ++r) {
    d.features.push_back(static_cast<double>(r));
    d.binary_target.push_back(r < 245 ? 1 : 0);
    d.row_ids.push_back(std::to_string(r));
  }
  d.meta.push_back({"f0", FeatureGroup::derived, 0});

  CandidateSet c;
  c.n_rows = 627;
  Rule root;
  root.uid = NodeUid{-1, 0};
  root.mu = d.positive_fraction();
  root.sample_count = 627;
  c.rules.push_back(root);
  c.membership.assign(627, 1);

  const HarvestModel m = optimize_weights(c, d);
  REQUIRE(m.rules.size() == 1);
  CHECK(m.rules[0].weight == 1.0);
  const std::vector<double> x = {123.0};
  CHECK(predict(m, x) == 245.0 / 627.0);
}

TEST_CASE("optimizer drives the objective to zero on pure disjoint rules") {
  // 20 rows, labels exactly follow f0 <= 0.5; candidate rules are the root
  // and the two pure halves.
  Dataset d;
  d.n_rows = 20;
  d.n_features = 1;
  d.target_kind = TargetKind::binary;
  for (int r = 0; r < 20; ++r) {
    const double x = (r + 0.5) / 20.0;
    d.features.push_back(x);
    d.binary_target.push_back(x <= 0.5 ? 1 : 0);
    d.row_ids.push_back(std::to_string(r));
  }
  d.meta.push_back({"f0", FeatureGroup::derived, 0});

  const Forest f = single_stump(0.5, 1.0, 0.0);
  HarvestParams hp;
  hp.min_samples = 1;
  const CandidateSet c = harvest_candidates(f, d, hp);
  REQUIRE(c.rules.size() == 3);

  const HarvestModel m = optimize_weights(c, d);
  CHECK(m.summary.objective <= 1e-6);
  CHECK(m.summary.objective <= m.summary.root_objective);

  // Exhaustive 3-weight grid at resolution 0.01 agrees.
  const oracles::GridInstance g = to_grid_instance(c, d);
  const double grid_best = oracles::grid_search_min(g, 100);
  CHECK(std::abs(model_objective_via_oracle(m, d) - grid_best) <= 1e-3);

  // Both pure rules carry essentially all the weight in their rows.
  double pure_weight = 0.0, total_weight = 0.0;
  for (const auto& rule : m.rules) {
    total_weight += rule.weight;
    if (!rule.conditions.empty()) pure_weight += rule.weight;
  }
  CHECK(pure_weight / total_weight > 0.99);
}

TEST_CASE("solver matches the exhaustive grid on random small instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 6; ++trial) {
    const int n_rules = 2 + static_cast<int>(rng.next_below(4));  // 2..5
    const int n_rows = 12 + static_cast<int>(rng.next_below(29)); // 12..40
    const oracles::GridInstance g = random_instance(rng, n_rows, n_rules);
    const WrappedInstance w = wrap_instance(g);
    const HarvestModel m = optimize_weights(w.candidates, w.data);

    std::vector<double> weights(g.mu.size(), 0.0);
    for (const auto& rule : m.rules) {
      const int j = rule.uid.tree == -1 ? 0 : rule.uid.node;
      weights[j] = rule.weight;
    }
    const double solver_obj = oracles::grid_objective(g, weights);
    const double grid_obj = oracles::grid_search_min(g, 50, 2);
    CAPTURE(trial);
    CAPTURE(n_rules);
    CAPTURE(n_rows);
    CHECK(solver_obj <= grid_obj + 1e-3);
    CHECK(grid_obj <= solver_obj + 1e-3);
    CHECK(solver_obj <= m.summary.root_objective + 1e-12);
    for (double v : weights) CHECK(v >= 0.0);
  }
}

TEST_CASE("predict is a weighted average with a root fallback") {
  HarvestModel m;
  m.meta.push_back({"f0", FeatureGroup::derived, 0});
  m.quantiles.push_back({0, 0, 0.25, 0.5, 0.75, 1});
  Rule root;
  root.uid = NodeUid{-1, 0};
  root.mu = 0.2;
  root.sample_count = 100;
  root.weight = 0.5;
  m.rules.push_back(root);
  Rule wide;
  wide.uid = NodeUid{0, 1};
  wide.conditions = {{0, 1e9, SplitDirection::LE}};  // matches everything here
  wide.mu = 0.8;
  wide.sample_count = 50;
  wide.weight = 0.5;
  m.rules.push_back(wide);

  const std::vector<double> x = {0.3};
  CHECK(predict(m, x) == 0.5);

  SUBCASE("scaling all weights by a power of two is bit-exact") {
    HarvestModel scaled = m;
    for (auto& r : scaled.rules) r.weight *= 4.0;
    CHECK(predict(scaled, x) == predict(m, x));
  }

  SUBCASE("scaling by 1000 changes nothing within 1e-12") {
    HarvestModel scaled = m;
    for (auto& r : scaled.rules) r.weight *= 1000.0;
    CHECK(predict(scaled, x) == doctest::Approx(predict(m, x)).epsilon(1e-12));
  }

  SUBCASE("zero total weight falls back to the root mean") {
    HarvestModel zero = m;
    for (auto& r : zero.rules) r.weight = 0.0;
    CHECK(predict(zero, x) == 0.2);
  }
}

TEST_CASE("classify implements the inclusive decision rule") {
  CHECK(classify(0.45, 0.5) == Decision::benign);
  CHECK(classify(0.64, 0.5) == Decision::malignant);
  CHECK(classify(0.50, 0.5) == Decision::malignant);
  CHECK_THROWS_AS(classify(0.5, 1.5), UsageError);
  CHECK_THROWS_AS(classify(0.5, -0.1), UsageError);
}

TEST_CASE("explain mirrors predict and marks at most four numerals") {
  SUBCASE("root-only model") {
    HarvestModel m;
    m.meta.push_back({"f0", FeatureGroup::derived, 0});
    m.quantiles.push_back({0, 0, 0.25, 0.5, 0.75, 1});
    Rule root;
    root.uid = NodeUid{-1, 0};
    root.mu = 0.39;
    root.sample_count = 627;
    root.weight = 1.0;
    m.rules.push_back(root);
    const std::vector<double> x = {0.4};
    const Explanation e = explain(m, x, "case-0");
    REQUIRE(e.active.size() == 1);
    CHECK(e.active[0].numeral == 1);
    CHECK(e.probability == predict(m, x));
    CHECK(e.decision == Decision::benign);
  }

  SUBCASE("six active rules get exactly four numerals in weight order") {
    HarvestModel m;
    m.meta.push_back({"f0", FeatureGroup::derived, 0});
    m.quantiles.push_back({0, 0, 0.25, 0.5, 0.75, 1});
    Rule root;
    root.uid = NodeUid{-1, 0};
    root.mu = 0.4;
    root.sample_count = 60;
    root.weight = 0.05;
    m.rules.push_back(root);
    for (int j = 0; j < 5; ++j) {
      Rule r;
      r.uid = NodeUid{0, j + 1};
      r.conditions = {{0, 1e9, SplitDirection::LE}};
      r.mu = 0.1 * (j + 1);
      r.sample_count = 10 * (j + 1);
      r.weight = 0.1 + 0.1 * j;  // 0.1 .. 0.5, all distinct
      m.rules.push_back(r);
    }
    const std::vector<double> x = {0.0};
    const Explanation e = explain(m, x);
    REQUIRE(e.active.size() == 6);
    // Sorted by weight descending: 0.5, 0.4, 0.3, 0.2, 0.1, 0.05.
    int numerals = 0;
    for (const auto& a : e.active) {
      if (a.numeral > 0) ++numerals;
    }
    CHECK(numerals == 4);
    CHECK(e.active[0].numeral == 1);
    CHECK(e.active[0].weight == 0.5);
    CHECK(e.active[3].numeral == 4);
    CHECK(e.active[4].numeral == 0);
    CHECK(e.probability == predict(m, x));
  }

  SUBCASE("weight ties break toward the lower node uid") {
    HarvestModel m;
    m.meta.push_back({"f0", FeatureGroup::derived, 0});
    m.quantiles.push_back({0, 0, 0.25, 0.5, 0.75, 1});
    Rule root;
    root.uid = NodeUid{-1, 0};
    root.mu = 0.5;
    root.sample_count = 10;
    root.weight = 0.9;
    m.rules.push_back(root);
    for (int j = 0; j < 5; ++j) {
      Rule r;
      r.uid = NodeUid{2, 10 - j};  // descending node ids
      r.conditions = {{0, 1e9, SplitDirection::LE}};
      r.mu = 0.5;
      r.sample_count = 5;
      r.weight = 0.2;  // five-way tie for ranks 2..6
      m.rules.push_back(r);
    }
    const std::vector<double> x = {0.0};
    const Explanation e = explain(m, x);
    REQUIRE(e.active.size() == 6);
    CHECK(e.active[0].numeral == 1);  // the root, weight 0.9
    // Ties resolved by ascending uid: nodes 6, 7, 8 get numerals 2..4.
    CHECK(m.rules[e.active[1].rule_index].uid == NodeUid{2, 6});
    CHECK(m.rules[e.active[2].rule_index].uid == NodeUid{2, 7});
    CHECK(m.rules[e.active[3].rule_index].uid == NodeUid{2, 8});
    CHECK(e.active[4].numeral == 0);
  }

  SUBCASE("all-zero weights yield no numerals and the root fallback") {
    HarvestModel m;
    m.meta.push_back({"f0", FeatureGroup::derived, 0});
    m.quantiles.push_back({0, 0, 0.25, 0.5, 0.75, 1});
    Rule root;
    root.uid = NodeUid{-1, 0};
    root.mu = 0.37;
    root.sample_count = 10;
    root.weight = 0.0;
    m.rules.push_back(root);
    const std::vector<double> x = {0.0};
    const Explanation e = explain(m, x);
    CHECK(e.active.size() == 1);
    CHECK(e.active[0].numeral == 0);
    CHECK(e.probability == 0.37);
  }
}

TEST_CASE("full pipeline beats the root model on planted data") {
  SynthSpec spec;
  spec.n_rows = 400;
  spec.n_features = 8;
  spec.planted_rules = {{{{0, 0.5, SplitDirection::LE},
                          {1, 0.5, SplitDirection::LE}},
                         0.95}};
  spec.base_rate = 0.05;
  const Dataset d = synthesize(spec, 41);

  ForestParams fp;
  fp.n_trees = 80;
  fp.max_depth = 3;
  fp.min_samples_leaf = 5;
  const Forest f = grow_forest(d, fp, 13);
  HarvestParams hp;
  const CandidateSet c = harvest_candidates(f, d, hp);
  CHECK(c.rules.size() > 10);
  const HarvestModel m = optimize_weights(c, d);

  CHECK(m.summary.objective < m.summary.root_objective);
  // Training-set separation: mean prediction in the planted region is far
  // above the mean outside it.
  double in_sum = 0, out_sum = 0;
  int in_n = 0, out_n = 0;
  for (int r = 0; r < d.n_rows; ++r) {
    const double p = predict(m, d.row(r));
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    if (d.value(r, 0) <= 0.5 && d.value(r, 1) <= 0.5) {
      in_sum += p;
      ++in_n;
    } else {
      out_sum += p;
      ++out_n;
    }
  }
  CHECK(in_sum / in_n > out_sum / out_n + 0.5);
}
