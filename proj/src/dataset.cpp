#include "ruleharvest/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "ruleharvest/errors.hpp"
#include "ruleharvest/rng.hpp"

namespace ruleharvest {

namespace {

const std::unordered_map<std::string, FeatureGroup>& group_names() {
  static const std::unordered_map<std::string, FeatureGroup> names = {
      {"kinetic", FeatureGroup::kinetic},
      {"morphologic", FeatureGroup::morphologic},
      {"texture_t1w", FeatureGroup::texture_t1w},
      {"t2w", FeatureGroup::t2w},
      {"dispersion", FeatureGroup::dispersion},
      {"single_time_point", FeatureGroup::single_time_point},
      {"derived", FeatureGroup::derived},
  };
  return names;
}

// RFC-4180 record reader: quoted fields, doubled quotes, CRLF or LF endings.
// Returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  int c = in.get();
  if (c == EOF) return false;
  std::string field;
  bool in_quotes = false;
  bool any = false;
  while (true) {
    if (c == EOF) {
      fields.push_back(field);
      return true;
    }
    any = true;
    if (in_quotes) {
      if (c == '"') {
        const int next = in.peek();
        if (next == '"') {
          field.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(static_cast<char>(c));
      }
    } else if (c == '"' && field.empty()) {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c == '\n') {
      fields.push_back(field);
      return true;
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get();
      fields.push_back(field);
      return true;
    } else {
      field.push_back(static_cast<char>(c));
    }
    c = in.get();
  }
  (void)any;
}

bool needs_quoting(const std::string& s) {
  return s.find_first_of(",\"\r\n") != std::string::npos;
}

std::string csv_escape(const std::string& s) {
  if (!needs_quoting(s)) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_cell(const std::string& cell, int row, const std::string& column) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  // Trailing whitespace is tolerated; anything else is a parse error.
  const char* p = end;
  while (p && *p != '\0' && std::isspace(static_cast<unsigned char>(*p))) ++p;
  if (end == begin || p == nullptr || *p != '\0') {
    throw SchemaError("unparseable cell \"" + cell + "\" at data row " +
                      std::to_string(row) + ", column \"" + column + "\"");
  }
  if (!std::isfinite(v)) {
    throw SchemaError("non-finite value at data row " + std::to_string(row) +
                      ", column \"" + column + "\"");
  }
  return v;
}

std::unordered_map<std::string, FeatureGroup> load_group_metadata(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open group metadata file: " + path);
  std::unordered_map<std::string, FeatureGroup> out;
  std::vector<std::string> fields;
  if (!read_record(in, fields) || fields.size() < 2) {
    throw SchemaError("group metadata file needs a `feature,group` header: " + path);
  }
  int row = 0;
  while (read_record(in, fields)) {
    ++row;
    if (fields.size() == 1 && fields[0].empty()) continue;  // trailing newline
    if (fields.size() < 2) {
      throw SchemaError("group metadata row " + std::to_string(row) +
                        " needs two columns");
    }
    out[fields[0]] = feature_group_from_string(fields[1]);
  }
  return out;
}

}  // namespace

const char* to_string(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::kinetic: return "kinetic";
    case FeatureGroup::morphologic: return "morphologic";
    case FeatureGroup::texture_t1w: return "texture_t1w";
    case FeatureGroup::t2w: return "t2w";
    case FeatureGroup::dispersion: return "dispersion";
    case FeatureGroup::single_time_point: return "single_time_point";
    case FeatureGroup::derived: return "derived";
  }
  return "derived";
}

FeatureGroup feature_group_from_string(const std::string& s) {
  const auto& names = group_names();
  const auto it = names.find(s);
  if (it == names.end()) throw SchemaError("unknown feature group: " + s);
  return it->second;
}

const char* to_string(TargetKind k) {
  switch (k) {
    case TargetKind::none: return "none";
    case TargetKind::binary: return "binary";
    case TargetKind::category: return "category";
    case TargetKind::real: return "real";
  }
  return "none";
}

double Dataset::positive_fraction() const {
  if (target_kind != TargetKind::binary || n_rows == 0) return 0.0;
  const double pos = static_cast<double>(
      std::count(binary_target.begin(), binary_target.end(), 1));
  return pos / static_cast<double>(n_rows);
}

int Dataset::feature_index(const std::string& name) const {
  for (const auto& m : meta) {
    if (m.name == name) return m.index;
  }
  return -1;
}

Dataset load_csv(const std::string& path, const LoadSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file: " + path);

  std::vector<std::string> header;
  if (!read_record(in, header) || header.empty()) {
    throw SchemaError("missing header row in " + path);
  }
  {
    std::set<std::string> seen;
    for (const auto& name : header) {
      if (!seen.insert(name).second) {
        throw SchemaError("duplicate column \"" + name + "\" in " + path);
      }
    }
  }

  int target_col = -1;
  int id_col = -1;
  for (size_t i = 0; i < header.size(); ++i) {
    if (!spec.target_column.empty() && header[i] == spec.target_column)
      target_col = static_cast<int>(i);
    if (!spec.id_column.empty() && header[i] == spec.id_column)
      id_col = static_cast<int>(i);
  }
  if (!spec.target_column.empty() && target_col < 0) {
    throw SchemaError("target column \"" + spec.target_column +
                      "\" not found in " + path);
  }
  if (!spec.id_column.empty() && id_col < 0) {
    throw SchemaError("id column \"" + spec.id_column + "\" not found in " +
                      path);
  }

  Dataset d;
  std::vector<int> feature_cols;
  for (size_t i = 0; i < header.size(); ++i) {
    if (static_cast<int>(i) == target_col || static_cast<int>(i) == id_col)
      continue;
    FeatureMeta m;
    m.name = header[i];
    m.index = static_cast<int>(feature_cols.size());
    d.meta.push_back(std::move(m));
    feature_cols.push_back(static_cast<int>(i));
  }
  d.n_features = static_cast<int>(feature_cols.size());
  if (d.n_features == 0) throw SchemaError("no feature columns in " + path);

  std::vector<std::string> raw_targets;
  std::vector<std::string> fields;
  int row = 0;
  while (read_record(in, fields)) {
    if (fields.size() == 1 && fields[0].empty()) continue;  // trailing newline
    if (fields.size() != header.size()) {
      throw SchemaError("data row " + std::to_string(row) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(header.size()));
    }
    for (size_t k = 0; k < feature_cols.size(); ++k) {
      d.features.push_back(
          parse_cell(fields[feature_cols[k]], row, header[feature_cols[k]]));
    }
    if (target_col >= 0) raw_targets.push_back(fields[target_col]);
    d.row_ids.push_back(id_col >= 0 ? fields[id_col] : std::to_string(row));
    ++row;
  }
  d.n_rows = row;
  if (d.n_rows == 0) throw SchemaError("empty dataset: " + path);

  if (target_col < 0) {
    d.target_kind = TargetKind::none;
    return d;
  }

  // Resolve the declared or detected target kind.
  TargetDecl decl = spec.target;
  if (decl == TargetDecl::autodetect) {
    bool all_numeric = true;
    bool all_binary = true;
    for (const auto& cell : raw_targets) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0') {
        all_numeric = false;
        break;
      }
      if (v != 0.0 && v != 1.0) all_binary = false;
    }
    decl = !all_numeric ? TargetDecl::category
           : all_binary ? TargetDecl::binary
                        : TargetDecl::real;
  }

  const std::string& tname = spec.target_column;
  switch (decl) {
    case TargetDecl::binary: {
      d.target_kind = TargetKind::binary;
      for (int r = 0; r < d.n_rows; ++r) {
        const double v = parse_cell(raw_targets[r], r, tname);
        if (v != 0.0 && v != 1.0) {
          throw SchemaError("binary target expects 0 or 1 at data row " +
                            std::to_string(r) + ", column \"" + tname + "\"");
        }
        d.binary_target.push_back(v == 1.0 ? 1 : 0);
      }
      break;
    }
    case TargetDecl::real: {
      d.target_kind = TargetKind::real;
      for (int r = 0; r < d.n_rows; ++r) {
        d.real_target.push_back(parse_cell(raw_targets[r], r, tname));
      }
      break;
    }
    case TargetDecl::category: {
      d.target_kind = TargetKind::category;
      std::unordered_map<std::string, int> index;
      for (int r = 0; r < d.n_rows; ++r) {
        auto [it, inserted] = index.emplace(
            raw_targets[r], static_cast<int>(d.category_names.size()));
        if (inserted) d.category_names.push_back(raw_targets[r]);
        d.category_target.push_back(it->second);
      }
      break;
    }
    case TargetDecl::autodetect:
      break;  // unreachable
  }

  if (!spec.group_metadata_path.empty()) {
    const auto groups = load_group_metadata(spec.group_metadata_path);
    for (auto& m : d.meta) {
      const auto it = groups.find(m.name);
      if (it != groups.end()) m.group = it->second;
    }
  }
  return d;
}

void save_csv(const Dataset& d, const std::string& path) {
  std::ostringstream out;
  out << "id";
  for (const auto& m : d.meta) out << ',' << csv_escape(m.name);
  if (d.target_kind != TargetKind::none) out << ",target";
  out << '\n';
  for (int r = 0; r < d.n_rows; ++r) {
    out << csv_escape(d.row_ids[r]);
    for (int c = 0; c < d.n_features; ++c) out << ',' << format_double(d.value(r, c));
    switch (d.target_kind) {
      case TargetKind::binary: out << ',' << d.binary_target[r]; break;
      case TargetKind::category:
        out << ',' << csv_escape(d.category_names[d.category_target[r]]);
        break;
      case TargetKind::real: out << ',' << format_double(d.real_target[r]); break;
      case TargetKind::none: break;
    }
    out << '\n';
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << out.str();
  if (!f) throw IoError("short write to " + path);
}

QuantileSummary compute_quantiles(const Dataset& d, int feature) {
  if (feature < 0 || feature >= d.n_features) {
    throw UsageError("feature index out of range: " + std::to_string(feature));
  }
  std::vector<double> col(d.n_rows);
  for (int r = 0; r < d.n_rows; ++r) col[r] = d.value(r, feature);
  std::sort(col.begin(), col.end());

  // Type-7: h = (n - 1) p, linear interpolation between order statistics.
  const auto at = [&](double p) {
    const double h = (static_cast<double>(col.size()) - 1.0) * p;
    const size_t lo = static_cast<size_t>(h);
    const size_t hi = std::min(lo + 1, col.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return col[lo] + frac * (col[hi] - col[lo]);
  };

  QuantileSummary q;
  q.feature_index = feature;
  q.q0_min = col.front();
  q.q1 = at(0.25);
  q.q2_median = at(0.5);
  q.q3 = at(0.75);
  q.q4_max = col.back();
  return q;
}

std::vector<QuantileSummary> compute_all_quantiles(const Dataset& d) {
  std::vector<QuantileSummary> out;
  out.reserve(d.n_features);
  for (int f = 0; f < d.n_features; ++f) out.push_back(compute_quantiles(d, f));
  return out;
}

FoldPlan stratified_kfold(const Dataset& d, int k, uint64_t seed) {
  if (k < 2 || k > d.n_rows) {
    throw UsageError("fold count must satisfy 2 <= k <= n_rows, got k=" +
                     std::to_string(k) + " with n_rows=" +
                     std::to_string(d.n_rows));
  }

  // Group rows by class; a single group for real or absent targets.
  std::vector<std::vector<int>> groups;
  if (d.target_kind == TargetKind::binary) {
    groups.resize(2);
    for (int r = 0; r < d.n_rows; ++r) groups[d.binary_target[r] == 1 ? 0 : 1].push_back(r);
  } else if (d.target_kind == TargetKind::category) {
    groups.resize(d.category_names.size());
    for (int r = 0; r < d.n_rows; ++r) groups[d.category_target[r]].push_back(r);
  } else {
    groups.resize(1);
    for (int r = 0; r < d.n_rows; ++r) groups[0].push_back(r);
  }

  Rng rng(seed);
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.assignments.assign(d.n_rows, 0);
  // Deal the concatenated shuffled groups round-robin: fold sizes differ by
  // at most one overall, and per-class counts differ by at most one.
  int deal = 0;
  for (auto& g : groups) {
    rng.shuffle(g);
    for (int r : g) plan.assignments[r] = deal++ % k;
  }
  return plan;
}

Dataset synthesize(const SynthSpec& spec, uint64_t seed) {
  if (spec.n_rows < 1 || spec.n_features < 1) {
    throw UsageError("synthesis needs n_rows >= 1 and n_features >= 1");
  }
  if (spec.base_rate < 0.0 || spec.base_rate > 1.0 || spec.noise_rate < 0.0 ||
      spec.noise_rate > 1.0) {
    throw UsageError("base_rate and noise_rate must lie in [0,1]");
  }
  for (const auto& rule : spec.planted_rules) {
    if (rule.positive_probability < 0.0 || rule.positive_probability > 1.0) {
      throw UsageError("planted rule probability must lie in [0,1]");
    }
    for (const auto& c : rule.conditions) {
      if (c.feature_index < 0 || c.feature_index >= spec.n_features) {
        throw UsageError("planted rule references feature " +
                         std::to_string(c.feature_index) +
                         " outside [0, n_features)");
      }
    }
  }

  Rng rng(seed);
  Dataset d;
  d.n_rows = spec.n_rows;
  d.n_features = spec.n_features;
  d.features.resize(static_cast<size_t>(spec.n_rows) * spec.n_features);
  for (auto& v : d.features) v = rng.next_unit();
  for (int f = 0; f < spec.n_features; ++f) {
    d.meta.push_back({"f" + std::to_string(f), FeatureGroup::derived, f});
  }
  d.target_kind = TargetKind::binary;
  for (int r = 0; r < spec.n_rows; ++r) {
    d.row_ids.push_back(std::to_string(r));
    const auto x = d.row(r);
    double p = spec.base_rate;
    for (const auto& rule : spec.planted_rules) {
      bool match = true;
      for (const auto& c : rule.conditions) {
        if (!c.matches(x)) {
          match = false;
          break;
        }
      }
      if (match) {
        p = rule.positive_probability;
        break;
      }
    }
    int label = rng.next_unit() < p ? 1 : 0;
    if (spec.noise_rate > 0.0 && rng.next_unit() < spec.noise_rate) label = 1 - label;
    d.binary_target.push_back(label);
  }
  return d;
}

Dataset synthesize_categories(const CategorySynthSpec& spec, uint64_t seed) {
  if (spec.n_rows < 1 || spec.n_features < 1) {
    throw UsageError("synthesis needs n_rows >= 1 and n_features >= 1");
  }
  if (spec.categories.size() != 4) {
    throw UsageError("category synthesis expects exactly 4 category names");
  }
  for (int s = 0; s < 3; ++s) {
    if (spec.stage_features[s] < 0 || spec.stage_features[s] >= spec.n_features) {
      throw UsageError("stage feature index outside [0, n_features)");
    }
  }

  Rng rng(seed);
  Dataset d;
  d.n_rows = spec.n_rows;
  d.n_features = spec.n_features;
  d.features.resize(static_cast<size_t>(spec.n_rows) * spec.n_features);
  for (auto& v : d.features) v = rng.next_unit();
  for (int f = 0; f < spec.n_features; ++f) {
    d.meta.push_back({"f" + std::to_string(f), FeatureGroup::derived, f});
  }
  d.target_kind = TargetKind::category;
  d.category_names = spec.categories;
  for (int r = 0; r < spec.n_rows; ++r) {
    d.row_ids.push_back(std::to_string(r));
    const auto x = d.row(r);
    int cat = 0;  // None
    if (x[spec.stage_features[0]] > 0.5) {
      cat = x[spec.stage_features[1]] <= 0.5 ? 1    // Hypointense
            : x[spec.stage_features[2]] <= 0.5 ? 2  // SlightlyHyperintense
                                               : 3; // Hyperintense
    }
    d.category_target.push_back(cat);
  }
  return d;
}

Dataset synthesize_regression(const RegressionSynthSpec& spec, uint64_t seed) {
  if (spec.n_rows < 1 || spec.n_features < 1) {
    throw UsageError("synthesis needs n_rows >= 1 and n_features >= 1");
  }
  if (spec.signal_feature < 0 || spec.signal_feature >= spec.n_features) {
    throw UsageError("signal feature index outside [0, n_features)");
  }
  Rng rng(seed);
  Dataset d;
  d.n_rows = spec.n_rows;
  d.n_features = spec.n_features;
  d.features.resize(static_cast<size_t>(spec.n_rows) * spec.n_features);
  for (auto& v : d.features) v = rng.next_unit();
  for (int f = 0; f < spec.n_features; ++f) {
    d.meta.push_back({"f" + std::to_string(f), FeatureGroup::derived, f});
  }
  d.target_kind = TargetKind::real;
  for (int r = 0; r < spec.n_rows; ++r) {
    d.row_ids.push_back(std::to_string(r));
    const double y = spec.intercept + spec.slope * d.value(r, spec.signal_feature) +
                     spec.noise_sigma * rng.next_normal();
    d.real_target.push_back(std::max(y, spec.floor));
  }
  return d;
}

}  // namespace ruleharvest
