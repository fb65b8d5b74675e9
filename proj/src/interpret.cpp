#include "ruleharvest/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "ruleharvest/errors.hpp"

namespace ruleharvest {

namespace {

using nlohmann::json;

std::string fmt(double v, int precision = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

const char* group_color(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::kinetic: return "#1f77b4";
    case FeatureGroup::morphologic: return "#ff7f0e";
    case FeatureGroup::texture_t1w: return "#2ca02c";
    case FeatureGroup::t2w: return "#d62728";
    case FeatureGroup::dispersion: return "#9467bd";
    case FeatureGroup::single_time_point: return "#8c564b";
    case FeatureGroup::derived: return "#7f7f7f";
  }
  return "#7f7f7f";
}

bool condition_less(const SplitTest& a, const SplitTest& b) {
  if (a.feature_index != b.feature_index) return a.feature_index < b.feature_index;
  if (a.direction != b.direction) return a.direction == SplitDirection::GT;
  return a.threshold < b.threshold;
}

bool is_strict_subset(const std::vector<SplitTest>& a,
                      const std::vector<SplitTest>& b) {
  if (a.size() >= b.size()) return false;
  return std::includes(b.begin(), b.end(), a.begin(), a.end(), condition_less);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string emit_svg(const GraphSpec& spec);
std::string emit_dot(const GraphSpec& spec);
std::string emit_json_spec(const GraphSpec& spec);

}  // namespace

const char* to_string(OrdinalCategory c) {
  switch (c) {
    case OrdinalCategory::very_low: return "very low";
    case OrdinalCategory::low: return "low";
    case OrdinalCategory::medium: return "medium";
    case OrdinalCategory::high: return "high";
    case OrdinalCategory::very_high: return "very high";
  }
  return "medium";
}

OrdinalCategory ordinalize(double threshold, const QuantileSummary& q) {
  // Constant feature: no information to discriminate.
  if (q.q0_min == q.q4_max) return OrdinalCategory::medium;
  // Nearest of the five quantile points; the shared midpoint itself belongs
  // to the lower label, which also makes the mapping monotone in threshold.
  for (int i = 0; i < 4; ++i) {
    const double mid = q.point(i) + 0.5 * (q.point(i + 1) - q.point(i));
    if (threshold <= mid) return static_cast<OrdinalCategory>(i);
  }
  return OrdinalCategory::very_high;
}

RenderedRule render_rule(const Rule& r, const std::vector<FeatureMeta>& meta,
                         const std::vector<QuantileSummary>& quantiles) {
  RenderedRule out;
  out.mu = r.mu;
  out.weight = r.weight;
  out.sample_count = r.sample_count;
  for (const auto& c : r.conditions) {
    const size_t f = static_cast<size_t>(c.feature_index);
    if (f >= meta.size() || f >= quantiles.size()) {
      throw SchemaError("rule references feature " +
                        std::to_string(c.feature_index) +
                        " with no metadata or quantiles");
    }
    RenderedClause clause;
    clause.feature = meta[f].name;
    clause.group = meta[f].group;
    clause.comparator_phrase = c.direction == SplitDirection::LE ? "at most" : "above";
    clause.category = ordinalize(c.threshold, quantiles[f]);
    clause.raw_threshold = c.threshold;
    out.clauses.push_back(std::move(clause));
  }
  return out;
}

std::string rendered_rule_text(const RenderedRule& r) {
  if (r.clauses.empty()) return "always";
  std::string out;
  for (size_t i = 0; i < r.clauses.size(); ++i) {
    if (i > 0) out += " and ";
    out += r.clauses[i].feature + " " + r.clauses[i].comparator_phrase + " " +
           to_string(r.clauses[i].category);
  }
  return out;
}

GraphFormat graph_format_from_string(const std::string& s) {
  if (s == "svg") return GraphFormat::svg;
  if (s == "dot") return GraphFormat::dot;
  if (s == "json" || s == "json-spec") return GraphFormat::json_spec;
  throw UsageError("unsupported graph format: \"" + s +
                   "\" (expected svg, dot or json)");
}

GraphSpec build_graph_spec(const HarvestModel& m, const Explanation* e) {
  if (m.rules.empty()) throw UsageError("cannot plot an empty model");
  GraphSpec spec;
  spec.decision_threshold = m.decision_threshold;

  std::vector<int> numeral_of(m.rules.size(), 0);
  std::vector<uint8_t> highlighted(m.rules.size(), 0);
  if (e != nullptr) {
    spec.probability = e->probability;
    for (const auto& a : e->active) {
      highlighted[a.rule_index] = 1;
      numeral_of[a.rule_index] = a.numeral;
    }
  }

  for (size_t j = 0; j < m.rules.size(); ++j) {
    const Rule& r = m.rules[j];
    GraphNode node;
    node.x = r.mu;
    node.y = r.sample_count;
    node.weight = r.weight;
    node.highlighted = highlighted[j] != 0;
    node.numeral = numeral_of[j];
    node.is_root = r.conditions.empty();
    node.group = r.conditions.empty()
                     ? FeatureGroup::derived
                     : m.meta[r.conditions[0].feature_index].group;
    node.uid = r.uid;
    spec.nodes.push_back(node);
  }

  // Containment tree: each rule hangs off the most specific rule whose
  // condition set is a strict subset of its own (the root qualifies always).
  for (size_t j = 0; j < m.rules.size(); ++j) {
    if (m.rules[j].conditions.empty()) continue;
    int parent = -1;
    size_t parent_size = 0;
    for (size_t i = 0; i < m.rules.size(); ++i) {
      if (i == j) continue;
      if (!is_strict_subset(m.rules[i].conditions, m.rules[j].conditions))
        continue;
      if (parent < 0 || m.rules[i].conditions.size() > parent_size) {
        parent = static_cast<int>(i);
        parent_size = m.rules[i].conditions.size();
      }
    }
    if (parent >= 0) {
      spec.edges.emplace_back(parent, static_cast<int>(j));
    }
  }

  // Legend entries for the numbered rules, in numeral order.
  if (e != nullptr) {
    for (int numeral = 1; numeral <= 4; ++numeral) {
      for (const auto& a : e->active) {
        if (a.numeral != numeral) continue;
        RenderedRule rr = render_rule(m.rules[a.rule_index], m.meta, m.quantiles);
        rr.numeral = numeral;
        spec.legend.push_back(std::move(rr));
      }
    }
  }
  return spec;
}

std::string emit_graph(const HarvestModel& m, const Explanation* e,
                       GraphFormat format) {
  const GraphSpec spec = build_graph_spec(m, e);
  switch (format) {
    case GraphFormat::svg: return emit_svg(spec);
    case GraphFormat::dot: return emit_dot(spec);
    case GraphFormat::json_spec: return emit_json_spec(spec);
  }
  throw UsageError("unsupported graph format");
}

namespace {

std::string emit_svg(const GraphSpec& spec) {
  const int width = 960;
  const int plot_h = 460;
  const int ml = 70, mr = 30, mt = 40;
  const int plot_w = width - ml - mr;
  const int legend_h = 26 * static_cast<int>(spec.legend.size());
  const int height = mt + plot_h + 70 + legend_h;

  int y_max = 1;
  double w_max = 0.0;
  for (const auto& n : spec.nodes) {
    y_max = std::max(y_max, n.y);
    w_max = std::max(w_max, n.weight);
  }

  const auto px = [&](double x) { return ml + x * plot_w; };
  const auto py = [&](double y) {
    return mt + plot_h * (1.0 - y / (1.05 * y_max));
  };
  // Circle area proportional to weight; a floor keeps zero-weight nodes
  // (typically the root) visible.
  const auto radius = [&](double w) {
    if (w_max <= 0.0 || w <= 0.0) return 3.0;
    return std::max(3.0, 22.0 * std::sqrt(w / w_max));
  };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
    << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
    << height << "\">\n";
  s << "<rect width=\"" << width << "\" height=\"" << height
    << "\" fill=\"white\"/>\n";

  // Axes and ticks.
  s << "<line x1=\"" << ml << "\" y1=\"" << mt + plot_h << "\" x2=\""
    << ml + plot_w << "\" y2=\"" << mt + plot_h
    << "\" stroke=\"#333\" stroke-width=\"1\"/>\n";
  s << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
    << "\" y2=\"" << mt + plot_h << "\" stroke=\"#333\" stroke-width=\"1\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double x = 0.25 * i;
    s << "<line x1=\"" << fmt(px(x), 1) << "\" y1=\"" << mt + plot_h
      << "\" x2=\"" << fmt(px(x), 1) << "\" y2=\"" << mt + plot_h + 5
      << "\" stroke=\"#333\"/>\n";
    s << "<text x=\"" << fmt(px(x), 1) << "\" y=\"" << mt + plot_h + 20
      << "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#333\">"
      << fmt(x, 2) << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double y = 1.05 * y_max * i / 4.0;
    s << "<text x=\"" << ml - 8 << "\" y=\"" << fmt(py(y) + 4, 1)
      << "\" font-size=\"12\" text-anchor=\"end\" fill=\"#333\">"
      << static_cast<int>(y) << "</text>\n";
  }
  s << "<text x=\"" << ml + plot_w / 2 << "\" y=\"" << mt + plot_h + 40
    << "\" font-size=\"13\" text-anchor=\"middle\" fill=\"#111\">node mean "
       "P(malignant)</text>\n";
  s << "<text x=\"18\" y=\"" << mt + plot_h / 2
    << "\" font-size=\"13\" text-anchor=\"middle\" fill=\"#111\" "
       "transform=\"rotate(-90 18 "
    << mt + plot_h / 2 << ")\">node sample size</text>\n";

  // Decision threshold marker.
  s << "<line x1=\"" << fmt(px(spec.decision_threshold), 1) << "\" y1=\"" << mt
    << "\" x2=\"" << fmt(px(spec.decision_threshold), 1) << "\" y2=\""
    << mt + plot_h
    << "\" stroke=\"#bbbbbb\" stroke-dasharray=\"2,4\" stroke-width=\"1\"/>\n";

  // Containment edges under the circles.
  for (const auto& [a, b] : spec.edges) {
    s << "<line x1=\"" << fmt(px(spec.nodes[a].x), 1) << "\" y1=\""
      << fmt(py(spec.nodes[a].y), 1) << "\" x2=\"" << fmt(px(spec.nodes[b].x), 1)
      << "\" y2=\"" << fmt(py(spec.nodes[b].y), 1)
      << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
  }

  for (const auto& n : spec.nodes) {
    const char* color = n.is_root ? "#555555" : group_color(n.group);
    s << "<circle cx=\"" << fmt(px(n.x), 1) << "\" cy=\"" << fmt(py(n.y), 1)
      << "\" r=\"" << fmt(radius(n.weight), 1) << "\" fill=\"" << color
      << "\" fill-opacity=\"" << (n.highlighted ? "0.85" : "0.30") << "\"";
    if (n.highlighted) s << " stroke=\"#000000\" stroke-width=\"2\"";
    s << "/>\n";
    if (n.numeral > 0) {
      s << "<text x=\"" << fmt(px(n.x), 1) << "\" y=\""
        << fmt(py(n.y) - radius(n.weight) - 4, 1)
        << "\" font-size=\"15\" font-weight=\"bold\" text-anchor=\"middle\" "
           "fill=\"#000\">"
        << n.numeral << "</text>\n";
    }
  }

  if (spec.probability.has_value()) {
    const double p = *spec.probability;
    s << "<line x1=\"" << fmt(px(p), 1) << "\" y1=\"" << mt << "\" x2=\""
      << fmt(px(p), 1) << "\" y2=\"" << mt + plot_h
      << "\" stroke=\"#cc0000\" stroke-dasharray=\"6,3\" stroke-width=\"1.5\"/>\n";
    s << "<text x=\"" << fmt(px(p), 1) << "\" y=\"" << mt - 8
      << "\" font-size=\"13\" text-anchor=\"middle\" fill=\"#cc0000\">P = "
      << fmt(p, 3) << "</text>\n";
  }

  int ly = mt + plot_h + 60;
  for (const auto& rr : spec.legend) {
    s << "<text x=\"" << ml << "\" y=\"" << ly << "\" font-size=\"13\" "
         "fill=\"#111\">"
      << rr.numeral << ". ";
    if (rr.clauses.empty()) {
      s << "always";
    } else {
      for (size_t i = 0; i < rr.clauses.size(); ++i) {
        if (i > 0) s << " and ";
        s << "<tspan fill=\"" << group_color(rr.clauses[i].group) << "\">"
          << xml_escape(rr.clauses[i].feature) << "</tspan> "
          << rr.clauses[i].comparator_phrase << " "
          << to_string(rr.clauses[i].category);
      }
    }
    s << " &#8594; p = " << fmt(rr.mu, 3) << " (n = " << rr.sample_count
      << ", w = " << fmt(rr.weight, 3) << ")</text>\n";
    ly += 26;
  }

  s << "</svg>\n";
  return s.str();
}

std::string emit_dot(const GraphSpec& spec) {
  std::ostringstream s;
  s << "digraph rulegraph {\n";
  s << "  rankdir=TB;\n  node [shape=circle, style=filled];\n";
  for (size_t j = 0; j < spec.nodes.size(); ++j) {
    const auto& n = spec.nodes[j];
    s << "  n" << j << " [label=\"";
    if (n.numeral > 0) s << "[" << n.numeral << "] ";
    s << (n.is_root ? "root" : "rule") << "\\nmu=" << fmt(n.x, 3)
      << "\\nn=" << n.y << "\\nw=" << fmt(n.weight, 3) << "\"";
    s << ", fillcolor=\"" << (n.is_root ? "#555555" : group_color(n.group))
      << (n.highlighted ? "\"" : "40\"");
    if (n.highlighted) s << ", penwidth=2.5";
    s << "];\n";
  }
  for (const auto& [a, b] : spec.edges) {
    s << "  n" << a << " -> n" << b << ";\n";
  }
  if (spec.probability.has_value()) {
    s << "  label=\"P(malignant) = " << fmt(*spec.probability, 4) << "\";\n";
  }
  s << "}\n";
  return s.str();
}

std::string emit_json_spec(const GraphSpec& spec) {
  json j;
  j["schema_version"] = 1;
  j["kind"] = "rule_graph";
  j["decision_threshold"] = spec.decision_threshold;
  if (spec.probability.has_value()) {
    j["probability"] = *spec.probability;
  } else {
    j["probability"] = nullptr;
  }
  j["nodes"] = json::array();
  for (const auto& n : spec.nodes) {
    json node;
    node["x"] = n.x;
    node["y"] = n.y;
    node["weight"] = n.weight;
    node["highlighted"] = n.highlighted;
    node["numeral"] = n.numeral;
    node["group"] = to_string(n.group);
    node["root"] = n.is_root;
    node["uid"] = {n.uid.tree, n.uid.node};
    j["nodes"].push_back(std::move(node));
  }
  j["edges"] = json::array();
  for (const auto& [a, b] : spec.edges) j["edges"].push_back({a, b});
  j["legend"] = json::array();
  for (const auto& rr : spec.legend) {
    json entry;
    entry["numeral"] = rr.numeral;
    entry["text"] = rendered_rule_text(rr);
    entry["mu"] = rr.mu;
    entry["weight"] = rr.weight;
    entry["sample_count"] = rr.sample_count;
    entry["clauses"] = json::array();
    for (const auto& c : rr.clauses) {
      entry["clauses"].push_back({{"feature", c.feature},
                                  {"group", to_string(c.group)},
                                  {"comparator", c.comparator_phrase},
                                  {"category", to_string(c.category)},
                                  {"threshold", c.raw_threshold}});
    }
    j["legend"].push_back(std::move(entry));
  }
  return j.dump(2) + "\n";
}

}  // namespace

}  // namespace ruleharvest
