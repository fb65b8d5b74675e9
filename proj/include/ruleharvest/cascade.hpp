#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ruleharvest/dataset.hpp"
#include "ruleharvest/ensemble.hpp"

namespace ruleharvest {

// BIRADS T2w signal-intensity category. CSV labels use these exact strings.
enum class BiradsCategory { None, Hypointense, SlightlyHyperintense, Hyperintense };

const char* to_string(BiradsCategory c);
BiradsCategory birads_from_string(const std::string& s);

// Lesion-to-muscle signal intensity ratio; errors on a non-positive muscle
// reference.
double measure_lmsir(double lesion_mean_si, double muscle_mean_si);

struct CascadeParams {
  BoostParams boost;
  std::array<double, 3> thresholds = {0.5, 0.5, 0.5};
  // Feature subset per stage (dataset column indices); empty = all columns.
  std::array<std::vector<int>, 3> stage_features;
};

// Three logistic stages on nested populations:
//   stage 1: all rows,                 positive = signal reported (not None)
//   stage 2: rows with signal,         positive = hyperintense side
//   stage 3: hyperintense-side rows,   positive = fully Hyperintense
struct CascadeModel {
  BoostedEnsemble stage1, stage2, stage3;
  std::array<double, 3> thresholds = {0.5, 0.5, 0.5};
  std::array<std::vector<int>, 3> stage_features;
};

CascadeModel cascade_fit(const Dataset& d, const CascadeParams& params,
                         uint64_t seed);

struct CascadePrediction {
  BiradsCategory category = BiradsCategory::None;
  std::array<double, 3> stage_probabilities = {0.0, 0.0, 0.0};
};

// Routing: p1 < t1 -> None; else p2 < t2 -> Hypointense; else p3 < t3 ->
// SlightlyHyperintense; else Hyperintense. All three probabilities are
// reported even past the stop point.
CascadePrediction cascade_predict(const CascadeModel& m,
                                  std::span<const double> x);

struct LmsirParams {
  BoostParams boost;
};

struct LmsirModel {
  BoostedEnsemble regressor;
  double min_target = 0.0;  // predictions are clamped to the training range
  double max_target = 0.0;
};

LmsirModel lmsir_fit(const Dataset& d, const LmsirParams& params,
                     uint64_t seed);

double lmsir_predict(const LmsirModel& m, std::span<const double> x);

}  // namespace ruleharvest
