#include "ruleharvest/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

#include "ruleharvest/errors.hpp"
#include "ruleharvest/rng.hpp"

namespace ruleharvest {

namespace {

Dataset subset_rows(const Dataset& d, const std::vector<int>& rows) {
  Dataset out;
  out.n_rows = static_cast<int>(rows.size());
  out.n_features = d.n_features;
  out.meta = d.meta;
  out.target_kind = d.target_kind;
  out.category_names = d.category_names;
  out.features.reserve(static_cast<size_t>(out.n_rows) * d.n_features);
  for (int r : rows) {
    const auto row = d.row(r);
    out.features.insert(out.features.end(), row.begin(), row.end());
    out.row_ids.push_back(d.row_ids[r]);
    switch (d.target_kind) {
      case TargetKind::binary: out.binary_target.push_back(d.binary_target[r]); break;
      case TargetKind::category:
        out.category_target.push_back(d.category_target[r]);
        break;
      case TargetKind::real: out.real_target.push_back(d.real_target[r]); break;
      case TargetKind::none: break;
    }
  }
  return out;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return sample_quantile(std::move(v), 0.5);
}

// AUC of one resample / fold given parallel (score, label) vectors.
double auc_value(std::span<const double> scores, std::span<const int> labels) {
  return roc_auc(scores, labels).auc;
}

void summarize_folds(CvReport& report) {
  std::vector<double> defined;
  for (double v : report.per_fold) {
    if (!std::isnan(v)) defined.push_back(v);
  }
  report.fold_median = median_of(defined);
  report.fold_q1 = defined.empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : sample_quantile(defined, 0.25);
  report.fold_q3 = defined.empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : sample_quantile(defined, 0.75);
}

}  // namespace

double sample_quantile(std::vector<double> values, double p) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const size_t lo = static_cast<size_t>(h);
  const size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

RocResult roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw UsageError("scores and labels must have equal lengths");
  }
  if (scores.empty()) throw UsageError("roc_auc needs at least one observation");

  int64_t n_pos = 0, n_neg = 0;
  for (int l : labels) (l == 1 ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0) {
    throw SchemaError("roc_auc needs both classes present");
  }

  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[a] > scores[b];
  });

  RocResult out;
  out.n_pos = static_cast<int>(n_pos);
  out.n_neg = static_cast<int>(n_neg);
  out.curve.emplace_back(0.0, 0.0);

  // Pair counting in integers: a positive scoring above a negative is worth
  // 2, a tie is worth 1; auc = total / (2 * n_pos * n_neg). This equals the
  // trapezoidal integral of the curve exactly.
  int64_t tp = 0, fp = 0;
  int64_t twice_wins = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    int64_t group_pos = 0, group_neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? group_pos : group_neg) += 1;
      ++j;
    }
    const int64_t neg_below = n_neg - fp - group_neg;
    twice_wins += 2 * group_pos * neg_below + group_pos * group_neg;
    tp += group_pos;
    fp += group_neg;
    out.curve.emplace_back(static_cast<double>(fp) / static_cast<double>(n_neg),
                           static_cast<double>(tp) / static_cast<double>(n_pos));
    i = j;
  }
  out.auc = static_cast<double>(twice_wins) /
            (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
  return out;
}

double rmse(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size()) {
    throw UsageError("rmse needs equal-length vectors");
  }
  if (predicted.empty()) throw UsageError("rmse needs at least one observation");
  double total = 0.0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    const double e = predicted[i] - actual[i];
    total += e * e;
  }
  return std::sqrt(total / static_cast<double>(predicted.size()));
}

CategoryAccuracy category_accuracy(const std::vector<std::string>& predicted,
                                   const std::vector<std::string>& actual) {
  if (predicted.size() != actual.size()) {
    throw UsageError("category_accuracy needs equal-length vectors");
  }
  CategoryAccuracy out;
  std::map<std::string, int> correct;
  int total_correct = 0;
  for (size_t i = 0; i < actual.size(); ++i) {
    out.support[actual[i]] += 1;
    if (predicted[i] == actual[i]) {
      correct[actual[i]] += 1;
      ++total_correct;
    }
  }
  for (const auto& [cat, n] : out.support) {
    out.per_category[cat] = static_cast<double>(correct[cat]) / n;
  }
  out.overall = actual.empty()
                    ? 0.0
                    : static_cast<double>(total_correct) / actual.size();
  return out;
}

CiBounds bootstrap_ci(std::span<const double> scores,
                      std::span<const double> actuals, CvMetric metric,
                      const BootstrapSpec& spec) {
  if (spec.n_resamples < 1) throw UsageError("n_resamples must be >= 1");
  if (spec.level <= 0.0 || spec.level >= 1.0) {
    throw UsageError("confidence level must lie in (0, 1)");
  }
  const size_t n = scores.size();
  Rng rng(spec.seed);
  std::vector<double> stats;
  stats.reserve(spec.n_resamples);
  std::vector<double> s(n);
  std::vector<int> lab(n);
  std::vector<double> a(n);
  for (int b = 0; b < spec.n_resamples; ++b) {
    for (size_t i = 0; i < n; ++i) {
      const size_t pick = static_cast<size_t>(rng.next_below(n));
      s[i] = scores[pick];
      if (metric == CvMetric::auc) {
        lab[i] = actuals[pick] == 1.0 ? 1 : 0;
      } else {
        a[i] = actuals[pick];
      }
    }
    if (metric == CvMetric::auc) {
      const bool has_pos = std::find(lab.begin(), lab.end(), 1) != lab.end();
      const bool has_neg = std::find(lab.begin(), lab.end(), 0) != lab.end();
      // Degenerate single-class resamples carry no ranking information.
      stats.push_back(has_pos && has_neg ? auc_value(s, lab) : 0.5);
    } else {
      stats.push_back(rmse(s, a));
    }
  }
  CiBounds ci;
  ci.level = spec.level;
  ci.n_resamples = spec.n_resamples;
  ci.seed = spec.seed;
  const double alpha = 1.0 - spec.level;
  ci.lower = sample_quantile(stats, alpha / 2.0);
  ci.upper = sample_quantile(stats, 1.0 - alpha / 2.0);
  return ci;
}

CvReport cross_validate(const Dataset& d, const FoldPlan& plan,
                        const FoldFitScorer& fit, CvMetric metric,
                        uint64_t seed, const BootstrapSpec& bootstrap) {
  if (static_cast<int>(plan.assignments.size()) != d.n_rows) {
    throw UsageError("fold plan does not match the dataset");
  }
  if (metric == CvMetric::auc && d.target_kind != TargetKind::binary) {
    throw SchemaError("AUC cross-validation needs a binary target");
  }
  if (metric == CvMetric::rmse && d.target_kind != TargetKind::real) {
    throw SchemaError("RMSE cross-validation needs a real target");
  }

  CvReport report;
  report.metric = metric == CvMetric::auc ? "auc" : "rmse";
  report.k = plan.k;
  report.n_rows = d.n_rows;
  report.pooled_scores.assign(d.n_rows, 0.0);
  report.pooled_actuals.resize(d.n_rows);
  for (int r = 0; r < d.n_rows; ++r) {
    report.pooled_actuals[r] = metric == CvMetric::auc
                                   ? static_cast<double>(d.binary_target[r])
                                   : d.real_target[r];
  }

  for (int fold = 0; fold < plan.k; ++fold) {
    std::vector<int> train_rows, test_rows;
    for (int r = 0; r < d.n_rows; ++r) {
      (plan.assignments[r] == fold ? test_rows : train_rows).push_back(r);
    }
    if (train_rows.empty() || test_rows.empty()) {
      throw UsageError("fold " + std::to_string(fold) + " is degenerate");
    }
    const Dataset train = subset_rows(d, train_rows);
    const auto scorer = fit(train, derive_seed(seed, fold));
    for (int r : test_rows) {
      report.pooled_scores[r] = scorer(d.row(r));
    }

    if (metric == CvMetric::auc) {
      std::vector<double> s;
      std::vector<int> lab;
      for (int r : test_rows) {
        s.push_back(report.pooled_scores[r]);
        lab.push_back(d.binary_target[r]);
      }
      const bool has_pos = std::find(lab.begin(), lab.end(), 1) != lab.end();
      const bool has_neg = std::find(lab.begin(), lab.end(), 0) != lab.end();
      report.per_fold.push_back(has_pos && has_neg
                                    ? auc_value(s, lab)
                                    : std::numeric_limits<double>::quiet_NaN());
    } else {
      std::vector<double> p, a;
      for (int r : test_rows) {
        p.push_back(report.pooled_scores[r]);
        a.push_back(d.real_target[r]);
      }
      report.per_fold.push_back(rmse(p, a));
    }
  }

  summarize_folds(report);
  if (metric == CvMetric::auc) {
    std::vector<int> lab(d.binary_target.begin(), d.binary_target.end());
    report.pooled = auc_value(report.pooled_scores, lab);
  } else {
    report.pooled = rmse(report.pooled_scores, report.pooled_actuals);
  }
  BootstrapSpec bs = bootstrap;
  bs.seed = derive_seed(seed, 0x626f6f74);  // independent of the fold streams
  report.ci = bootstrap_ci(report.pooled_scores, report.pooled_actuals, metric, bs);
  return report;
}

CascadeCvReport cascade_cross_validate(const Dataset& d, const FoldPlan& plan,
                                       const CascadeParams& params,
                                       uint64_t seed,
                                       const BootstrapSpec& bootstrap) {
  if (d.target_kind != TargetKind::category) {
    throw SchemaError("cascade cross-validation needs a category target");
  }
  if (static_cast<int>(plan.assignments.size()) != d.n_rows) {
    throw UsageError("fold plan does not match the dataset");
  }

  std::vector<BiradsCategory> cat(d.n_rows);
  for (int r = 0; r < d.n_rows; ++r) {
    cat[r] = birads_from_string(d.category_names[d.category_target[r]]);
  }

  // Out-of-fold stage probabilities and routed categories for every row.
  std::vector<std::array<double, 3>> probs(d.n_rows);
  std::vector<BiradsCategory> routed(d.n_rows);
  for (int fold = 0; fold < plan.k; ++fold) {
    std::vector<int> train_rows, test_rows;
    for (int r = 0; r < d.n_rows; ++r) {
      (plan.assignments[r] == fold ? test_rows : train_rows).push_back(r);
    }
    if (train_rows.empty() || test_rows.empty()) {
      throw UsageError("fold " + std::to_string(fold) + " is degenerate");
    }
    const Dataset train = subset_rows(d, train_rows);
    const CascadeModel model =
        cascade_fit(train, params, derive_seed(seed, fold));
    for (int r : test_rows) {
      const CascadePrediction p = cascade_predict(model, d.row(r));
      probs[r] = p.stage_probabilities;
      routed[r] = p.category;
    }
  }

  // Stage k is scored on its nested population, by actual category.
  const auto eligible = [&](int stage, int r) {
    if (stage == 0) return true;
    if (stage == 1) return cat[r] != BiradsCategory::None;
    return cat[r] == BiradsCategory::SlightlyHyperintense ||
           cat[r] == BiradsCategory::Hyperintense;
  };
  const auto stage_label = [&](int stage, int r) {
    if (stage == 0) return cat[r] != BiradsCategory::None ? 1 : 0;
    if (stage == 1) return cat[r] != BiradsCategory::Hypointense ? 1 : 0;
    return cat[r] == BiradsCategory::Hyperintense ? 1 : 0;
  };

  CascadeCvReport report;
  report.k = plan.k;
  for (int stage = 0; stage < 3; ++stage) {
    CvReport& sr = report.stages[stage];
    sr.metric = "auc";
    sr.k = plan.k;
    for (int fold = 0; fold < plan.k; ++fold) {
      std::vector<double> s;
      std::vector<int> lab;
      for (int r = 0; r < d.n_rows; ++r) {
        if (plan.assignments[r] != fold || !eligible(stage, r)) continue;
        s.push_back(probs[r][stage]);
        lab.push_back(stage_label(stage, r));
      }
      const bool has_pos = std::find(lab.begin(), lab.end(), 1) != lab.end();
      const bool has_neg = std::find(lab.begin(), lab.end(), 0) != lab.end();
      sr.per_fold.push_back(has_pos && has_neg
                                ? auc_value(s, lab)
                                : std::numeric_limits<double>::quiet_NaN());
    }
    summarize_folds(sr);
    std::vector<double> s;
    std::vector<int> lab;
    for (int r = 0; r < d.n_rows; ++r) {
      if (!eligible(stage, r)) continue;
      s.push_back(probs[r][stage]);
      lab.push_back(stage_label(stage, r));
      sr.pooled_scores.push_back(probs[r][stage]);
      sr.pooled_actuals.push_back(stage_label(stage, r));
    }
    sr.n_rows = static_cast<int>(s.size());
    sr.pooled = auc_value(s, lab);
    BootstrapSpec bs = bootstrap;
    bs.seed = derive_seed(seed, 0x626f6f74 + stage);
    sr.ci = bootstrap_ci(sr.pooled_scores, sr.pooled_actuals, CvMetric::auc, bs);
  }

  std::vector<std::string> predicted, actual;
  for (int r = 0; r < d.n_rows; ++r) {
    predicted.push_back(to_string(routed[r]));
    actual.push_back(to_string(cat[r]));
  }
  report.accuracy = category_accuracy(predicted, actual);
  return report;
}

}  // namespace ruleharvest
