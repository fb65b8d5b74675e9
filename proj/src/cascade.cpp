#include "ruleharvest/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ruleharvest/errors.hpp"
#include "ruleharvest/rng.hpp"

namespace ruleharvest {

namespace {

// Column-subset copy with a binary stage label; keeps tree code oblivious to
// the cascade's nested populations.
Dataset stage_dataset(const Dataset& d, const std::vector<int>& rows,
                      const std::vector<int>& columns,
                      const std::vector<int>& labels) {
  Dataset out;
  out.n_rows = static_cast<int>(rows.size());
  out.n_features = static_cast<int>(columns.size());
  out.features.reserve(static_cast<size_t>(out.n_rows) * out.n_features);
  for (size_t i = 0; i < rows.size(); ++i) {
    for (int c : columns) out.features.push_back(d.value(rows[i], c));
    out.row_ids.push_back(d.row_ids[rows[i]]);
  }
  for (size_t k = 0; k < columns.size(); ++k) {
    FeatureMeta m = d.meta[columns[k]];
    m.index = static_cast<int>(k);
    out.meta.push_back(std::move(m));
  }
  out.target_kind = TargetKind::binary;
  out.binary_target = labels;
  return out;
}

std::vector<int> resolve_columns(const Dataset& d,
                                 const std::vector<int>& requested) {
  if (requested.empty()) {
    std::vector<int> all(d.n_features);
    for (int i = 0; i < d.n_features; ++i) all[i] = i;
    return all;
  }
  for (int c : requested) {
    if (c < 0 || c >= d.n_features) {
      throw UsageError("stage feature index " + std::to_string(c) +
                       " outside [0, n_features)");
    }
  }
  return requested;
}

std::vector<double> gather(std::span<const double> x,
                           const std::vector<int>& columns) {
  std::vector<double> out(columns.size());
  for (size_t i = 0; i < columns.size(); ++i) out[i] = x[columns[i]];
  return out;
}

}  // namespace

const char* to_string(BiradsCategory c) {
  switch (c) {
    case BiradsCategory::None: return "None";
    case BiradsCategory::Hypointense: return "Hypointense";
    case BiradsCategory::SlightlyHyperintense: return "SlightlyHyperintense";
    case BiradsCategory::Hyperintense: return "Hyperintense";
  }
  return "None";
}

BiradsCategory birads_from_string(const std::string& s) {
  if (s == "None") return BiradsCategory::None;
  if (s == "Hypointense") return BiradsCategory::Hypointense;
  if (s == "SlightlyHyperintense") return BiradsCategory::SlightlyHyperintense;
  if (s == "Hyperintense") return BiradsCategory::Hyperintense;
  throw SchemaError("unknown BIRADS T2w category label: \"" + s + "\"");
}

double measure_lmsir(double lesion_mean_si, double muscle_mean_si) {
  if (!std::isfinite(lesion_mean_si) || !std::isfinite(muscle_mean_si)) {
    throw SchemaError("LMSIR inputs must be finite");
  }
  if (muscle_mean_si <= 0.0) {
    throw SchemaError("muscle mean signal intensity must be positive");
  }
  if (lesion_mean_si < 0.0) {
    throw SchemaError("lesion mean signal intensity must be non-negative");
  }
  return lesion_mean_si / muscle_mean_si;
}

CascadeModel cascade_fit(const Dataset& d, const CascadeParams& params,
                         uint64_t seed) {
  if (d.target_kind != TargetKind::category) {
    throw SchemaError("cascade fitting needs a category target");
  }
  for (double t : params.thresholds) {
    if (t <= 0.0 || t >= 1.0) {
      throw UsageError("stage thresholds must lie in (0, 1)");
    }
  }

  // Map dataset categories onto the four-level lexicon.
  std::vector<BiradsCategory> levels(d.category_names.size());
  for (size_t i = 0; i < d.category_names.size(); ++i) {
    levels[i] = birads_from_string(d.category_names[i]);
  }
  std::vector<BiradsCategory> cat(d.n_rows);
  for (int r = 0; r < d.n_rows; ++r) cat[r] = levels[d.category_target[r]];

  const auto require_both = [](const std::vector<int>& labels, int stage) {
    const bool has0 = std::find(labels.begin(), labels.end(), 0) != labels.end();
    const bool has1 = std::find(labels.begin(), labels.end(), 1) != labels.end();
    if (!has0 || !has1) {
      throw FitError("stage " + std::to_string(stage) +
                     " training subset is missing a required category");
    }
  };

  CascadeModel m;
  m.thresholds = params.thresholds;
  for (int s = 0; s < 3; ++s) {
    m.stage_features[s] = resolve_columns(d, params.stage_features[s]);
  }

  // Stage 1: all rows, positive = any signal reported.
  {
    std::vector<int> rows(d.n_rows);
    std::vector<int> labels(d.n_rows);
    for (int r = 0; r < d.n_rows; ++r) {
      rows[r] = r;
      labels[r] = cat[r] != BiradsCategory::None ? 1 : 0;
    }
    require_both(labels, 1);
    m.stage1 = boost_fit(stage_dataset(d, rows, m.stage_features[0], labels),
                         BoostLoss::logistic, params.boost, derive_seed(seed, 1));
  }

  // Stage 2: rows with signal, positive = hyperintense side.
  {
    std::vector<int> rows;
    std::vector<int> labels;
    for (int r = 0; r < d.n_rows; ++r) {
      if (cat[r] == BiradsCategory::None) continue;
      rows.push_back(r);
      labels.push_back(cat[r] != BiradsCategory::Hypointense ? 1 : 0);
    }
    require_both(labels, 2);
    m.stage2 = boost_fit(stage_dataset(d, rows, m.stage_features[1], labels),
                         BoostLoss::logistic, params.boost, derive_seed(seed, 2));
  }

  // Stage 3: hyperintense side, positive = fully Hyperintense.
  {
    std::vector<int> rows;
    std::vector<int> labels;
    for (int r = 0; r < d.n_rows; ++r) {
      if (cat[r] != BiradsCategory::SlightlyHyperintense &&
          cat[r] != BiradsCategory::Hyperintense)
        continue;
      rows.push_back(r);
      labels.push_back(cat[r] == BiradsCategory::Hyperintense ? 1 : 0);
    }
    require_both(labels, 3);
    m.stage3 = boost_fit(stage_dataset(d, rows, m.stage_features[2], labels),
                         BoostLoss::logistic, params.boost, derive_seed(seed, 3));
  }
  return m;
}

CascadePrediction cascade_predict(const CascadeModel& m,
                                  std::span<const double> x) {
  CascadePrediction out;
  const std::vector<double> x1 = gather(x, m.stage_features[0]);
  const std::vector<double> x2 = gather(x, m.stage_features[1]);
  const std::vector<double> x3 = gather(x, m.stage_features[2]);
  out.stage_probabilities[0] = boost_predict(m.stage1, x1);
  out.stage_probabilities[1] = boost_predict(m.stage2, x2);
  out.stage_probabilities[2] = boost_predict(m.stage3, x3);
  if (out.stage_probabilities[0] < m.thresholds[0]) {
    out.category = BiradsCategory::None;
  } else if (out.stage_probabilities[1] < m.thresholds[1]) {
    out.category = BiradsCategory::Hypointense;
  } else if (out.stage_probabilities[2] < m.thresholds[2]) {
    out.category = BiradsCategory::SlightlyHyperintense;
  } else {
    out.category = BiradsCategory::Hyperintense;
  }
  return out;
}

LmsirModel lmsir_fit(const Dataset& d, const LmsirParams& params,
                     uint64_t seed) {
  if (d.target_kind != TargetKind::real) {
    throw SchemaError("LMSIR fitting needs a real target");
  }
  for (int r = 0; r < d.n_rows; ++r) {
    if (d.real_target[r] <= 0.0) {
      throw SchemaError("LMSIR target must be positive at data row " +
                        std::to_string(r));
    }
  }
  LmsirModel m;
  m.regressor = boost_fit(d, BoostLoss::squared, params.boost, seed);
  m.min_target = *std::min_element(d.real_target.begin(), d.real_target.end());
  m.max_target = *std::max_element(d.real_target.begin(), d.real_target.end());
  return m;
}

double lmsir_predict(const LmsirModel& m, std::span<const double> x) {
  return std::clamp(boost_predict(m.regressor, x), m.min_target, m.max_target);
}

}  // namespace ruleharvest
