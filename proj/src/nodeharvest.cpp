#include "ruleharvest/nodeharvest.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "ruleharvest/errors.hpp"
#include "ruleharvest/rng.hpp"

namespace ruleharvest {

namespace {

// Canonical ordering inside a rule: by feature, lower bound (GT) before upper
// bound (LE). Display and dedup both rely on this.
void canonicalize(std::vector<SplitTest>& conditions) {
  std::sort(conditions.begin(), conditions.end(),
            [](const SplitTest& a, const SplitTest& b) {
              if (a.feature_index != b.feature_index)
                return a.feature_index < b.feature_index;
              if (a.direction != b.direction)
                return a.direction == SplitDirection::GT;
              return a.threshold < b.threshold;
            });
}

// Root-to-node path tests with same-feature conditions merged to an interval:
// the tightest upper bound among LE tests, the tightest lower bound among GT.
std::vector<SplitTest> path_conditions(const Tree& tree, int node_id) {
  std::vector<SplitTest> raw;
  int id = node_id;
  while (tree.nodes[id].parent >= 0) {
    const int parent = tree.nodes[id].parent;
    SplitTest test = *tree.nodes[parent].split;
    test.direction = tree.nodes[parent].left == id ? SplitDirection::LE
                                                   : SplitDirection::GT;
    raw.push_back(test);
    id = parent;
  }

  std::vector<SplitTest> merged;
  for (const auto& t : raw) {
    bool absorbed = false;
    for (auto& m : merged) {
      if (m.feature_index == t.feature_index && m.direction == t.direction) {
        if (t.direction == SplitDirection::LE) {
          m.threshold = std::min(m.threshold, t.threshold);
        } else {
          m.threshold = std::max(m.threshold, t.threshold);
        }
        absorbed = true;
        break;
      }
    }
    if (!absorbed) merged.push_back(t);
  }
  canonicalize(merged);
  return merged;
}

std::string condition_key(const std::vector<SplitTest>& conditions) {
  std::string key;
  key.reserve(conditions.size() * 13);
  for (const auto& c : conditions) {
    key.append(reinterpret_cast<const char*>(&c.feature_index), sizeof(int));
    key.push_back(c.direction == SplitDirection::LE ? 'L' : 'G');
    key.append(reinterpret_cast<const char*>(&c.threshold), sizeof(double));
  }
  return key;
}

std::vector<double> binary_targets(const Dataset& d) {
  if (d.target_kind != TargetKind::binary) {
    throw SchemaError("node harvest needs a binary target");
  }
  std::vector<double> y(d.n_rows);
  for (int r = 0; r < d.n_rows; ++r) y[r] = d.binary_target[r];
  return y;
}

// Squared error of the renormalized weighted-average prediction. Rows whose
// active weights sum to zero fall back to the root mean, matching predict().
struct Objective {
  const std::vector<std::vector<int>>& active;  // rule indices per row
  const std::vector<double>& mu;
  const std::vector<double>& y;
  double root_mu;

  double operator()(std::span<const double> w) const {
    double total = 0.0;
    for (size_t i = 0; i < active.size(); ++i) {
      double num = 0.0, den = 0.0;
      for (int j : active[i]) {
        num += w[j] * mu[j];
        den += w[j];
      }
      const double p = den > 0.0 ? num / den : root_mu;
      const double e = y[i] - p;
      total += e * e;
    }
    return total;
  }

  void gradient(std::span<const double> w, std::vector<double>& g) const {
    std::fill(g.begin(), g.end(), 0.0);
    for (size_t i = 0; i < active.size(); ++i) {
      double num = 0.0, den = 0.0;
      for (int j : active[i]) {
        num += w[j] * mu[j];
        den += w[j];
      }
      if (den <= 0.0) continue;  // fallback region is flat in w
      const double p = num / den;
      const double common = -2.0 * (y[i] - p) / den;
      for (int j : active[i]) {
        g[j] += common * (mu[j] - p);
      }
    }
  }
};

// Coordinate refinement for small candidate sets: probe a log grid per
// coordinate and tighten the best bracket by golden section.
double line_search_coordinate(const Objective& f, std::vector<double>& w,
                              int j, double f_cur) {
  const double scale =
      std::max(std::accumulate(w.begin(), w.end(), 0.0), 1e-9);
  std::vector<double> probes;
  probes.push_back(0.0);
  probes.push_back(w[j]);
  for (int i = 0; i < 25; ++i) {
    probes.push_back(scale * 1e-6 * std::pow(10.0, 7.0 * i / 24.0));
  }
  const double saved = w[j];
  double best_t = saved, best_f = f_cur;
  for (double t : probes) {
    w[j] = t;
    const double v = f(w);
    if (v < best_f) {
      best_f = v;
      best_t = t;
    }
  }
  // Golden-section around the best probe.
  double lo = best_t > 0.0 ? best_t / 3.0 : 0.0;
  double hi = best_t > 0.0 ? best_t * 3.0 : scale * 1e-5;
  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - kInvPhi * (b - a);
  double x2 = a + kInvPhi * (b - a);
  w[j] = x1;
  double f1 = f(w);
  w[j] = x2;
  double f2 = f(w);
  for (int it = 0; it < 48; ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInvPhi * (b - a);
      w[j] = x1;
      f1 = f(w);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInvPhi * (b - a);
      w[j] = x2;
      f2 = f(w);
    }
  }
  const double golden_t = f1 <= f2 ? x1 : x2;
  w[j] = golden_t;
  const double golden_f = f(w);
  if (golden_f < best_f) {
    best_f = golden_f;
    best_t = golden_t;
  }
  if (best_f < f_cur) {
    w[j] = best_t;
    return best_f;
  }
  w[j] = saved;
  return f_cur;
}

}  // namespace

CandidateSet harvest_candidates(const Forest& f, const Dataset& d,
                                const HarvestParams& params) {
  if (params.max_conditions < 1 || params.min_samples < 1 ||
      params.max_candidates < 1) {
    throw UsageError("harvest params must be positive");
  }
  const std::vector<double> y = binary_targets(d);

  struct Pending {
    Rule rule;
    std::vector<uint8_t> member;
  };
  std::vector<Pending> pending;

  // Global root rule: condition "always true", statistics over all of d.
  {
    Pending root;
    root.rule.uid = NodeUid{-1, 0};
    root.rule.mu = std::accumulate(y.begin(), y.end(), 0.0) /
                   static_cast<double>(d.n_rows);
    root.rule.sample_count = d.n_rows;
    root.member.assign(d.n_rows, 1);
    pending.push_back(std::move(root));
  }

  std::unordered_map<std::string, bool> seen;
  seen.emplace(condition_key({}), true);
  int dedup_count = 0;

  for (size_t t = 0; t < f.trees.size(); ++t) {
    const Tree& tree = f.trees[t];
    for (size_t n = 1; n < tree.nodes.size(); ++n) {
      Rule rule;
      rule.uid = NodeUid{static_cast<int>(t), static_cast<int>(n)};
      rule.conditions = path_conditions(tree, static_cast<int>(n));
      if (static_cast<int>(rule.conditions.size()) > params.max_conditions)
        continue;

      // Node statistics are recomputed on d, not on the bootstrap resample.
      std::vector<uint8_t> member(d.n_rows, 0);
      int count = 0;
      double sum = 0.0;
      for (int r = 0; r < d.n_rows; ++r) {
        if (rule.matches(d.row(r))) {
          member[r] = 1;
          ++count;
          sum += y[r];
        }
      }
      if (count < params.min_samples) continue;

      const std::string key = condition_key(rule.conditions);
      if (!seen.emplace(key, true).second) {
        ++dedup_count;
        continue;
      }
      rule.mu = sum / count;
      rule.sample_count = count;
      pending.push_back({std::move(rule), std::move(member)});
    }
  }

  // Seeded uniform subsample of the non-root rules when over budget,
  // preserving enumeration order.
  if (static_cast<int>(pending.size()) > params.max_candidates) {
    std::vector<int> ids(pending.size() - 1);
    std::iota(ids.begin(), ids.end(), 1);
    Rng rng(params.seed);
    for (int i = 0; i < params.max_candidates - 1; ++i) {
      const int j = i + static_cast<int>(rng.next_below(ids.size() - i));
      std::swap(ids[i], ids[j]);
    }
    ids.resize(params.max_candidates - 1);
    std::sort(ids.begin(), ids.end());
    std::vector<Pending> kept;
    kept.reserve(params.max_candidates);
    kept.push_back(std::move(pending[0]));
    for (int id : ids) kept.push_back(std::move(pending[id]));
    pending = std::move(kept);
  }

  CandidateSet out;
  out.n_rows = d.n_rows;
  out.dedup_count = dedup_count;
  out.rules.reserve(pending.size());
  out.membership.assign(static_cast<size_t>(d.n_rows) * pending.size(), 0);
  for (size_t j = 0; j < pending.size(); ++j) {
    for (int r = 0; r < d.n_rows; ++r) {
      out.membership[static_cast<size_t>(r) * pending.size() + j] =
          pending[j].member[r];
    }
    out.rules.push_back(std::move(pending[j].rule));
  }
  return out;
}

HarvestModel optimize_weights(const CandidateSet& c, const Dataset& d,
                              const SolverParams& params) {
  if (c.rules.empty() || !c.rules[0].conditions.empty()) {
    throw UsageError("candidate set must start with the root rule");
  }
  if (c.n_rows != d.n_rows) {
    throw UsageError("candidate set and dataset row counts differ");
  }
  if (params.max_iterations < 1) throw UsageError("max_iterations must be >= 1");
  if (params.tolerance < 0.0) throw UsageError("tolerance must be >= 0");
  const std::vector<double> y = binary_targets(d);

  const int n = c.n_rows;
  const int n_rules = static_cast<int>(c.rules.size());

  std::vector<std::vector<int>> active(n);
  for (int r = 0; r < n; ++r) {
    for (int j = 0; j < n_rules; ++j) {
      if (c.is_member(r, j)) active[r].push_back(j);
    }
  }
  std::vector<double> mu(n_rules);
  for (int j = 0; j < n_rules; ++j) mu[j] = c.rules[j].mu;

  const Objective f{active, mu, y, mu[0]};

  std::vector<double> root_only(n_rules, 0.0);
  root_only[0] = 1.0;
  const double f_root = f(root_only);

  // Projected gradient with monotone backtracking on the step size.
  int iterations = 0;
  const auto run_pg = [&](std::vector<double> w) {
    double f_cur = f(w);
    std::vector<double> g(n_rules, 0.0), w_try(n_rules, 0.0);
    double eta = 1.0;
    for (int iter = 0; iter < params.max_iterations; ++iter) {
      f.gradient(w, g);
      bool accepted = false;
      for (int halving = 0; halving < 60; ++halving) {
        double total = 0.0;
        for (int j = 0; j < n_rules; ++j) {
          w_try[j] = std::max(0.0, w[j] - eta * g[j]);
          total += w_try[j];
        }
        if (total > 0.0) {
          // Keep iterates on the unit simplex: predictions are invariant to
          // the scale and weight sizes stay comparable to the drop
          // tolerance.
          for (int j = 0; j < n_rules; ++j) w_try[j] /= total;
        }
        const double f_try = f(w_try);
        if (f_try < f_cur) {
          const double rel = (f_cur - f_try) / std::max(f_cur, 1e-30);
          w.swap(w_try);
          f_cur = f_try;
          eta = std::min(eta * 1.5, 1e9);
          accepted = true;
          ++iterations;
          if (rel < 1e-8) iter = params.max_iterations;  // converged
          break;
        }
        eta *= 0.5;
      }
      if (!accepted) break;
    }
    // Snap descent dust to exact zero.
    for (auto& v : w) {
      if (v < 1e-12) v = 0.0;
    }
    const double f_final = f(w);
    return std::make_pair(std::move(w), f_final);
  };

  const auto polish = [&](std::vector<double>& w, double f_cur) {
    for (int sweep = 0; sweep < 24; ++sweep) {
      const double before = f_cur;
      for (int j = 0; j < n_rules; ++j) {
        f_cur = line_search_coordinate(f, w, j, f_cur);
      }
      if (before - f_cur < 1e-12 * std::max(1.0, before)) break;
    }
    return f_cur;
  };

  // The renormalized objective is non-convex, so a single descent run can
  // stall in a coordinate-wise minimum. Deterministic multi-start: the
  // root-heavy prescription, a uniform spread, each rule paired with the
  // root, and on very small sets the best point of a coarse simplex grid.
  std::vector<std::vector<double>> starts;
  {
    std::vector<double> w0(n_rules, 1e-6);
    w0[0] = 1.0;
    starts.push_back(std::move(w0));
    starts.emplace_back(n_rules, 1.0 / n_rules);
    if (n_rules <= 24) {
      for (int j = 1; j < n_rules; ++j) {
        std::vector<double> pair(n_rules, 0.0);
        pair[0] = 0.5;
        pair[j] = 0.5;
        starts.push_back(std::move(pair));
      }
    }
    if (n_rules <= 10) {
      constexpr int kSeedSteps = 10;
      std::vector<double> best_w;
      double best_f = std::numeric_limits<double>::infinity();
      std::vector<double> w_grid(n_rules, 0.0);
      const auto enumerate = [&](auto&& self, int rule, int remaining) -> void {
        if (rule == n_rules - 1) {
          w_grid[rule] = static_cast<double>(remaining) / kSeedSteps;
          const double v = f(w_grid);
          if (v < best_f) {
            best_f = v;
            best_w = w_grid;
          }
          return;
        }
        for (int t = 0; t <= remaining; ++t) {
          w_grid[rule] = static_cast<double>(t) / kSeedSteps;
          self(self, rule + 1, remaining - t);
        }
        w_grid[rule] = 0.0;
      };
      enumerate(enumerate, 0, kSeedSteps);
      starts.push_back(std::move(best_w));
    }
  }

  std::vector<double> w;
  double f_cur = std::numeric_limits<double>::infinity();
  for (const auto& start : starts) {
    auto [w_run, f_run] = run_pg(start);
    if (n_rules <= 64) {
      // Alternate coordinate polish with fresh descent until neither moves.
      for (int round = 0; round < 3; ++round) {
        const double before = f_run;
        f_run = polish(w_run, f_run);
        auto [w_next, f_next] = run_pg(w_run);
        if (f_next < f_run) {
          w_run = std::move(w_next);
          f_run = f_next;
        }
        if (before - f_run < 1e-12 * std::max(1.0, before)) break;
      }
    }
    if (f_run < f_cur) {
      w = std::move(w_run);
      f_cur = f_run;
    }
  }

  // Normalize to a unit total so reported weights are comparable across
  // models; predictions are invariant to the scale.
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (total > 0.0) {
    for (auto& v : w) v /= total;
  }

  // Drop below-tolerance weights (root always kept), then re-check against
  // the guaranteed-feasible root-only solution.
  std::vector<double> w_model(n_rules, 0.0);
  w_model[0] = w[0];
  for (int j = 1; j < n_rules; ++j) {
    if (w[j] > params.tolerance) w_model[j] = w[j];
  }
  double f_model = f(w_model);
  if (f_model > f_root || total <= 0.0) {
    w_model = root_only;
    f_model = f_root;
  }

  HarvestModel m;
  m.meta = d.meta;
  m.quantiles = compute_all_quantiles(d);
  m.decision_threshold = 0.5;
  m.rules.push_back(c.rules[0]);
  m.rules[0].weight = w_model[0];
  for (int j = 1; j < n_rules; ++j) {
    if (w_model[j] > 0.0) {
      m.rules.push_back(c.rules[j]);
      m.rules.back().weight = w_model[j];
    }
  }
  m.summary.n_rows = n;
  m.summary.positive_fraction = d.positive_fraction();
  m.summary.objective = f_model;
  m.summary.root_objective = f_root;
  m.summary.iterations = iterations;
  m.summary.candidate_count = n_rules;
  m.summary.dedup_count = c.dedup_count;
  return m;
}

double predict(const HarvestModel& m, std::span<const double> x) {
  double num = 0.0, den = 0.0;
  for (const auto& rule : m.rules) {
    if (rule.matches(x)) {
      num += rule.weight * rule.mu;
      den += rule.weight;
    }
  }
  return den > 0.0 ? num / den : m.rules[0].mu;
}

const char* to_string(Decision d) {
  return d == Decision::malignant ? "malignant" : "benign";
}

Decision classify(double p, double threshold) {
  if (threshold < 0.0 || threshold > 1.0) {
    throw UsageError("decision threshold must lie in [0, 1]");
  }
  return p >= threshold ? Decision::malignant : Decision::benign;
}

Explanation explain(const HarvestModel& m, std::span<const double> x,
                    std::string case_id) {
  Explanation e;
  e.case_id = std::move(case_id);
  for (size_t j = 0; j < m.rules.size(); ++j) {
    const Rule& rule = m.rules[j];
    if (rule.matches(x)) {
      e.active.push_back({static_cast<int>(j), rule.weight, rule.mu,
                          rule.sample_count, 0});
    }
  }
  std::sort(e.active.begin(), e.active.end(),
            [&](const ActiveRule& a, const ActiveRule& b) {
              if (a.weight != b.weight) return a.weight > b.weight;
              return m.rules[a.rule_index].uid < m.rules[b.rule_index].uid;
            });
  for (size_t i = 0; i < e.active.size() && i < 4; ++i) {
    if (e.active[i].weight > 0.0) {
      e.active[i].numeral = static_cast<int>(i) + 1;
    }
  }
  e.probability = predict(m, x);
  e.decision = classify(e.probability, m.decision_threshold);
  return e;
}

}  // namespace ruleharvest
