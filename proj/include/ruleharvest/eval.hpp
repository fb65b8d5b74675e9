#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ruleharvest/cascade.hpp"
#include "ruleharvest/dataset.hpp"

namespace ruleharvest {

struct RocResult {
  double auc = 0.5;
  std::vector<std::pair<double, double>> curve;  // (fpr, tpr), one point per
                                                 // distinct score + (0,0)
  int n_pos = 0;
  int n_neg = 0;
};

// Mann-Whitney AUC with ties counting one half, computed from integer pair
// counts so it matches the trapezoidal integral of the curve exactly.
RocResult roc_auc(std::span<const double> scores, std::span<const int> labels);

double rmse(std::span<const double> predicted, std::span<const double> actual);

struct CategoryAccuracy {
  std::map<std::string, double> per_category;  // correct / actual per label
  std::map<std::string, int> support;
  double overall = 0.0;
};

CategoryAccuracy category_accuracy(const std::vector<std::string>& predicted,
                                   const std::vector<std::string>& actual);

struct BootstrapSpec {
  int n_resamples = 2000;
  double level = 0.95;
  uint64_t seed = 0;
};

struct CiBounds {
  double level = 0.95;
  double lower = 0.0;
  double upper = 0.0;
  int n_resamples = 0;
  uint64_t seed = 0;
};

enum class CvMetric { auc, rmse };

struct CvReport {
  std::string metric;  // "auc" or "rmse"
  int k = 0;
  int n_rows = 0;
  std::vector<double> per_fold;  // NaN when undefined for a fold
  double fold_median = 0.0;
  double fold_q1 = 0.0;
  double fold_q3 = 0.0;
  double pooled = 0.0;  // metric over concatenated out-of-fold predictions
  CiBounds ci;
  std::vector<double> pooled_scores;   // in row order
  std::vector<double> pooled_actuals;  // labels or real targets, row order
};

// Fits one model per fold and scores that fold's test rows. The callback
// receives the training subset and a fold-derived seed and returns a row
// scorer.
using FoldFitScorer = std::function<std::function<double(std::span<const double>)>(
    const Dataset& train, uint64_t fold_seed)>;

CvReport cross_validate(const Dataset& d, const FoldPlan& plan,
                        const FoldFitScorer& fit, CvMetric metric,
                        uint64_t seed, const BootstrapSpec& bootstrap);

// Cascade protocol report: one AUC block per stage (stage 2 and 3 evaluated
// on their nested populations) plus per-category accuracy of the routed
// predictions, pooled over out-of-fold results.
struct CascadeCvReport {
  int k = 0;
  std::array<CvReport, 3> stages;
  CategoryAccuracy accuracy;
};

CascadeCvReport cascade_cross_validate(const Dataset& d, const FoldPlan& plan,
                                       const CascadeParams& params,
                                       uint64_t seed,
                                       const BootstrapSpec& bootstrap);

// Percentile bootstrap over pooled (score, actual) pairs. AUC resamples that
// degenerate to a single class contribute 0.5.
CiBounds bootstrap_ci(std::span<const double> scores,
                      std::span<const double> actuals, CvMetric metric,
                      const BootstrapSpec& spec);

// Type-7 quantile of an unsorted sample (helper shared with reports).
double sample_quantile(std::vector<double> values, double p);

}  // namespace ruleharvest
