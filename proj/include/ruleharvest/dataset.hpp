#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ruleharvest/split_test.hpp"

namespace ruleharvest {

enum class FeatureGroup {
  kinetic,
  morphologic,
  texture_t1w,
  t2w,
  dispersion,
  single_time_point,
  derived,
};

const char* to_string(FeatureGroup g);
FeatureGroup feature_group_from_string(const std::string& s);

struct FeatureMeta {
  std::string name;
  FeatureGroup group = FeatureGroup::derived;
  int index = 0;
};

enum class TargetKind { none, binary, category, real };

const char* to_string(TargetKind k);

// Five-point empirical summary of one feature column (min, Q1, median, Q3,
// max), computed with type-7 linear interpolation.
struct QuantileSummary {
  int feature_index = 0;
  double q0_min = 0.0;
  double q1 = 0.0;
  double q2_median = 0.0;
  double q3 = 0.0;
  double q4_max = 0.0;

  double point(int i) const {
    switch (i) {
      case 0: return q0_min;
      case 1: return q1;
      case 2: return q2_median;
      case 3: return q3;
      default: return q4_max;
    }
  }
};

struct FoldPlan {
  int k = 0;
  std::vector<int> assignments;  // per-row fold index in [0, k)
  uint64_t seed = 0;
};

// Immutable after load; row-major feature storage. Exactly one target vector
// is populated according to `target_kind` (none for prediction-only inputs).
struct Dataset {
  std::vector<double> features;  // n_rows * n_features, row-major
  int n_rows = 0;
  int n_features = 0;
  std::vector<FeatureMeta> meta;
  std::vector<std::string> row_ids;

  TargetKind target_kind = TargetKind::none;
  std::vector<int> binary_target;            // values in {0, 1}; 1 = positive
  std::vector<int> category_target;          // indices into category_names
  std::vector<std::string> category_names;
  std::vector<double> real_target;

  std::span<const double> row(int r) const {
    return {features.data() + static_cast<size_t>(r) * n_features,
            static_cast<size_t>(n_features)};
  }
  double value(int r, int c) const {
    return features[static_cast<size_t>(r) * n_features + c];
  }
  double positive_fraction() const;  // binary targets only
  int feature_index(const std::string& name) const;  // -1 when absent
};

enum class TargetDecl { autodetect, binary, category, real };

struct LoadSpec {
  std::string target_column;          // empty -> no target (prediction input)
  TargetDecl target = TargetDecl::autodetect;
  std::string group_metadata_path;    // optional CSV `feature,group`
  std::string id_column;              // optional; default ids are row numbers
};

// RFC-4180 CSV with a mandatory header row. All feature cells must parse as
// finite reals; violations raise SchemaError naming the row and column.
Dataset load_csv(const std::string& path, const LoadSpec& spec);

// Deterministic CSV writer; save/load round-trips values exactly.
void save_csv(const Dataset& d, const std::string& path);

QuantileSummary compute_quantiles(const Dataset& d, int feature);
std::vector<QuantileSummary> compute_all_quantiles(const Dataset& d);

// Deterministic stratified k-fold assignment. Rows are grouped by class
// (binary/category targets), each group is shuffled, and the concatenated
// sequence is dealt round-robin so fold sizes differ by at most one and each
// class is spread as evenly as arithmetic allows.
FoldPlan stratified_kfold(const Dataset& d, int k, uint64_t seed);

// --- synthetic generators (acceptance harness + `synth` subcommand) ---

struct PlantedRule {
  std::vector<SplitTest> conditions;
  double positive_probability = 1.0;
};

struct SynthSpec {
  int n_rows = 627;
  int n_features = 144;
  std::vector<PlantedRule> planted_rules;
  double base_rate = 0.0;
  double noise_rate = 0.0;  // probability of flipping the sampled label
};

// Features uniform on [0,1); each row's label is sampled from the first
// matching planted rule's probability, otherwise from the base rate.
Dataset synthesize(const SynthSpec& spec, uint64_t seed);

// Four-category dataset with nested one-feature separations, one per cascade
// stage: stage k is decided by `stage_features[k] > 0.5`.
struct CategorySynthSpec {
  int n_rows = 1200;
  int n_features = 10;
  int stage_features[3] = {0, 1, 2};
  std::vector<std::string> categories = {"None", "Hypointense",
                                         "SlightlyHyperintense",
                                         "Hyperintense"};
};

Dataset synthesize_categories(const CategorySynthSpec& spec, uint64_t seed);

// Positive real target, linear in one feature plus Gaussian noise.
struct RegressionSynthSpec {
  int n_rows = 2000;
  int n_features = 10;
  int signal_feature = 0;
  double intercept = 0.5;
  double slope = 4.5;
  double noise_sigma = 0.1;
  double floor = 0.01;  // targets clamped to stay positive
};

Dataset synthesize_regression(const RegressionSynthSpec& spec, uint64_t seed);

}  // namespace ruleharvest
