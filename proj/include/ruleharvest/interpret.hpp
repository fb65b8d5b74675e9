#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ruleharvest/dataset.hpp"
#include "ruleharvest/nodeharvest.hpp"

namespace ruleharvest {

// Ordinal language for thresholds, mapped from the five quantile points
// {min, Q1, median, Q3, max}.
enum class OrdinalCategory { very_low, low, medium, high, very_high };

const char* to_string(OrdinalCategory c);  // "very low", ..., "very high"

// Assigns the label of the nearest quantile point; ties between adjacent
// points take the lower label; thresholds outside [min, max] clamp to the
// extreme labels. A fully degenerate summary (constant feature) maps
// everything to medium.
OrdinalCategory ordinalize(double threshold, const QuantileSummary& q);

struct RenderedClause {
  std::string feature;
  FeatureGroup group = FeatureGroup::derived;
  std::string comparator_phrase;  // "at most" (LE) or "above" (GT)
  OrdinalCategory category = OrdinalCategory::medium;
  double raw_threshold = 0.0;
};

struct RenderedRule {
  std::vector<RenderedClause> clauses;  // empty for the root rule
  double mu = 0.0;
  double weight = 0.0;
  int sample_count = 0;
  int numeral = 0;  // 0 = unmarked
};

RenderedRule render_rule(const Rule& r, const std::vector<FeatureMeta>& meta,
                         const std::vector<QuantileSummary>& quantiles);

// "always" for the root, otherwise clauses joined with "and":
// "f0 above low and f0 at most high".
std::string rendered_rule_text(const RenderedRule& r);

enum class GraphFormat { svg, dot, json_spec };

GraphFormat graph_format_from_string(const std::string& s);

struct GraphNode {
  double x = 0.0;       // node mean, in [0,1]
  int y = 0;            // node sample size
  double weight = 0.0;  // circle area is proportional to this
  bool highlighted = false;
  int numeral = 0;
  FeatureGroup group = FeatureGroup::derived;  // first clause's group
  bool is_root = false;
  NodeUid uid;
};

struct GraphSpec {
  std::vector<GraphNode> nodes;             // model rule order
  std::vector<std::pair<int, int>> edges;   // general rule -> most specific
                                            // strict-subset parent
  std::optional<double> probability;        // present with an explanation
  double decision_threshold = 0.5;
  std::vector<RenderedRule> legend;         // one entry per numeral
};

GraphSpec build_graph_spec(const HarvestModel& m, const Explanation* e);

// Deterministic bytes for identical inputs. SVG plots mean on x, sample size
// on y, circle area proportional to weight; DOT emits the containment tree;
// json_spec carries the exact numeric fields for testing.
std::string emit_graph(const HarvestModel& m, const Explanation* e,
                       GraphFormat format);

}  // namespace ruleharvest
