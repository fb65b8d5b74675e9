#include "ruleharvest/model_io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ruleharvest/errors.hpp"

namespace ruleharvest {

namespace {

using nlohmann::json;

json split_to_json(const SplitTest& s) {
  return {{"feature", s.feature_index},
          {"threshold", s.threshold},
          {"direction", s.direction == SplitDirection::LE ? "le" : "gt"}};
}

SplitTest split_from_json(const json& j) {
  SplitTest s;
  s.feature_index = j.at("feature").get<int>();
  s.threshold = j.at("threshold").get<double>();
  const std::string dir = j.at("direction").get<std::string>();
  if (dir != "le" && dir != "gt") throw SchemaError("bad split direction: " + dir);
  s.direction = dir == "le" ? SplitDirection::LE : SplitDirection::GT;
  return s;
}

json tree_to_json(const Tree& t) {
  json nodes = json::array();
  for (const auto& n : t.nodes) {
    json node = {{"id", n.id},          {"mean", n.mean_response},
                 {"count", n.sample_count}, {"depth", n.depth},
                 {"left", n.left},      {"right", n.right},
                 {"parent", n.parent}};
    node["split"] = n.split.has_value() ? split_to_json(*n.split) : json(nullptr);
    nodes.push_back(std::move(node));
  }
  return {{"nodes", std::move(nodes)}};
}

Tree tree_from_json(const json& j) {
  Tree t;
  for (const auto& nj : j.at("nodes")) {
    TreeNode n;
    n.id = nj.at("id").get<int>();
    n.mean_response = nj.at("mean").get<double>();
    n.sample_count = nj.at("count").get<int>();
    n.depth = nj.at("depth").get<int>();
    n.left = nj.at("left").get<int>();
    n.right = nj.at("right").get<int>();
    n.parent = nj.at("parent").get<int>();
    if (!nj.at("split").is_null()) n.split = split_from_json(nj.at("split"));
    t.nodes.push_back(std::move(n));
  }
  if (t.nodes.empty()) throw SchemaError("tree has no nodes");
  return t;
}

void check_envelope(const json& j, const std::string& expected_type) {
  if (!j.is_object() || !j.contains("schema_version") || !j.contains("model_type")) {
    throw SchemaError("not a model file (missing schema_version/model_type)");
  }
  if (j.at("schema_version").get<int>() != kModelSchemaVersion) {
    throw SchemaError("unsupported schema_version");
  }
  const std::string type = j.at("model_type").get<std::string>();
  if (type != expected_type) {
    throw SchemaError("expected a " + expected_type + " model, found " + type);
  }
}

json meta_to_json(const std::vector<FeatureMeta>& meta) {
  json out = json::array();
  for (const auto& m : meta) {
    out.push_back({{"name", m.name}, {"group", to_string(m.group)}, {"index", m.index}});
  }
  return out;
}

std::vector<FeatureMeta> meta_from_json(const json& j) {
  std::vector<FeatureMeta> out;
  for (const auto& mj : j) {
    FeatureMeta m;
    m.name = mj.at("name").get<std::string>();
    m.group = feature_group_from_string(mj.at("group").get<std::string>());
    m.index = mj.at("index").get<int>();
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

json forest_to_json(const Forest& f) {
  json j;
  j["schema_version"] = kModelSchemaVersion;
  j["model_type"] = "forest";
  j["seed"] = f.seed;
  j["params"] = {{"n_trees", f.params.n_trees},
                 {"max_depth", f.params.max_depth},
                 {"min_samples_leaf", f.params.min_samples_leaf},
                 {"mtry", f.params.mtry},
                 {"bootstrap", f.params.bootstrap}};
  j["trees"] = json::array();
  for (const auto& t : f.trees) j["trees"].push_back(tree_to_json(t));
  return j;
}

Forest forest_from_json(const json& j) {
  check_envelope(j, "forest");
  Forest f;
  f.seed = j.at("seed").get<uint64_t>();
  const json& p = j.at("params");
  f.params.n_trees = p.at("n_trees").get<int>();
  f.params.max_depth = p.at("max_depth").get<int>();
  f.params.min_samples_leaf = p.at("min_samples_leaf").get<int>();
  f.params.mtry = p.at("mtry").get<int>();
  f.params.bootstrap = p.at("bootstrap").get<bool>();
  for (const auto& tj : j.at("trees")) f.trees.push_back(tree_from_json(tj));
  if (f.trees.empty()) throw SchemaError("forest has no trees");
  return f;
}

json boosted_to_json(const BoostedEnsemble& b) {
  json j;
  j["schema_version"] = kModelSchemaVersion;
  j["model_type"] = "boosted";
  j["loss"] = b.loss == BoostLoss::logistic ? "logistic" : "squared";
  j["initial_score"] = b.initial_score;
  j["learning_rate"] = b.learning_rate;
  j["training_loss"] = b.training_loss;
  j["stages"] = json::array();
  for (const auto& t : b.stages) j["stages"].push_back(tree_to_json(t));
  return j;
}

BoostedEnsemble boosted_from_json(const json& j) {
  check_envelope(j, "boosted");
  BoostedEnsemble b;
  const std::string loss = j.at("loss").get<std::string>();
  if (loss != "logistic" && loss != "squared") {
    throw SchemaError("bad boosting loss: " + loss);
  }
  b.loss = loss == "logistic" ? BoostLoss::logistic : BoostLoss::squared;
  b.initial_score = j.at("initial_score").get<double>();
  b.learning_rate = j.at("learning_rate").get<double>();
  b.training_loss = j.at("training_loss").get<std::vector<double>>();
  for (const auto& tj : j.at("stages")) b.stages.push_back(tree_from_json(tj));
  if (b.stages.empty()) throw SchemaError("boosted ensemble has no stages");
  return b;
}

json harvest_model_to_json(const HarvestModel& m) {
  json j;
  j["schema_version"] = kModelSchemaVersion;
  j["model_type"] = "harvest";
  j["decision_threshold"] = m.decision_threshold;
  j["meta"] = meta_to_json(m.meta);
  j["quantiles"] = json::array();
  for (const auto& q : m.quantiles) {
    j["quantiles"].push_back(
        {{"feature", q.feature_index},
         {"points", {q.q0_min, q.q1, q.q2_median, q.q3, q.q4_max}}});
  }
  j["rules"] = json::array();
  for (const auto& r : m.rules) {
    json rule;
    rule["uid"] = {r.uid.tree, r.uid.node};
    rule["conditions"] = json::array();
    for (const auto& c : r.conditions) rule["conditions"].push_back(split_to_json(c));
    rule["mu"] = r.mu;
    rule["count"] = r.sample_count;
    rule["weight"] = r.weight;
    j["rules"].push_back(std::move(rule));
  }
  j["summary"] = {{"n_rows", m.summary.n_rows},
                  {"positive_fraction", m.summary.positive_fraction},
                  {"target_column", m.summary.target_column},
                  {"objective", m.summary.objective},
                  {"root_objective", m.summary.root_objective},
                  {"iterations", m.summary.iterations},
                  {"candidate_count", m.summary.candidate_count},
                  {"dedup_count", m.summary.dedup_count}};
  return j;
}

HarvestModel harvest_model_from_json(const json& j) {
  check_envelope(j, "harvest");
  HarvestModel m;
  m.decision_threshold = j.at("decision_threshold").get<double>();
  m.meta = meta_from_json(j.at("meta"));
  for (const auto& qj : j.at("quantiles")) {
    QuantileSummary q;
    q.feature_index = qj.at("feature").get<int>();
    const auto& pts = qj.at("points");
    if (pts.size() != 5) throw SchemaError("quantile summary needs 5 points");
    q.q0_min = pts[0].get<double>();
    q.q1 = pts[1].get<double>();
    q.q2_median = pts[2].get<double>();
    q.q3 = pts[3].get<double>();
    q.q4_max = pts[4].get<double>();
    m.quantiles.push_back(q);
  }
  for (const auto& rj : j.at("rules")) {
    Rule r;
    r.uid.tree = rj.at("uid")[0].get<int>();
    r.uid.node = rj.at("uid")[1].get<int>();
    for (const auto& cj : rj.at("conditions")) {
      r.conditions.push_back(split_from_json(cj));
    }
    r.mu = rj.at("mu").get<double>();
    r.sample_count = rj.at("count").get<int>();
    r.weight = rj.at("weight").get<double>();
    m.rules.push_back(std::move(r));
  }
  if (m.rules.empty() || !m.rules[0].conditions.empty()) {
    throw SchemaError("harvest model must begin with the root rule");
  }
  const json& s = j.at("summary");
  m.summary.n_rows = s.at("n_rows").get<int>();
  m.summary.positive_fraction = s.at("positive_fraction").get<double>();
  m.summary.target_column = s.at("target_column").get<std::string>();
  m.summary.objective = s.at("objective").get<double>();
  m.summary.root_objective = s.at("root_objective").get<double>();
  m.summary.iterations = s.at("iterations").get<int>();
  m.summary.candidate_count = s.at("candidate_count").get<int>();
  m.summary.dedup_count = s.at("dedup_count").get<int>();
  return m;
}

json cascade_model_to_json(const CascadeModel& m) {
  json j;
  j["schema_version"] = kModelSchemaVersion;
  j["model_type"] = "cascade";
  j["thresholds"] = {m.thresholds[0], m.thresholds[1], m.thresholds[2]};
  j["stage_features"] = {m.stage_features[0], m.stage_features[1],
                         m.stage_features[2]};
  j["stage1"] = boosted_to_json(m.stage1);
  j["stage2"] = boosted_to_json(m.stage2);
  j["stage3"] = boosted_to_json(m.stage3);
  return j;
}

CascadeModel cascade_model_from_json(const json& j) {
  check_envelope(j, "cascade");
  CascadeModel m;
  for (int i = 0; i < 3; ++i) {
    m.thresholds[i] = j.at("thresholds")[i].get<double>();
    m.stage_features[i] = j.at("stage_features")[i].get<std::vector<int>>();
  }
  m.stage1 = boosted_from_json(j.at("stage1"));
  m.stage2 = boosted_from_json(j.at("stage2"));
  m.stage3 = boosted_from_json(j.at("stage3"));
  return m;
}

json lmsir_model_to_json(const LmsirModel& m) {
  json j;
  j["schema_version"] = kModelSchemaVersion;
  j["model_type"] = "lmsir";
  j["min_target"] = m.min_target;
  j["max_target"] = m.max_target;
  j["regressor"] = boosted_to_json(m.regressor);
  return j;
}

LmsirModel lmsir_model_from_json(const json& j) {
  check_envelope(j, "lmsir");
  LmsirModel m;
  m.min_target = j.at("min_target").get<double>();
  m.max_target = j.at("max_target").get<double>();
  m.regressor = boosted_from_json(j.at("regressor"));
  return m;
}

json fold_plan_to_json(const FoldPlan& p) {
  return {{"k", p.k}, {"seed", p.seed}, {"assignments", p.assignments}};
}

json cv_report_to_json(const CvReport& r) {
  json j;
  j["metric"] = r.metric;
  j["k"] = r.k;
  j["n_rows"] = r.n_rows;
  j["per_fold"] = r.per_fold;
  j["fold_median"] = r.fold_median;
  j["fold_q1"] = r.fold_q1;
  j["fold_q3"] = r.fold_q3;
  j["pooled"] = r.pooled;
  j["ci"] = {{"level", r.ci.level},
             {"lower", r.ci.lower},
             {"upper", r.ci.upper},
             {"n_resamples", r.ci.n_resamples},
             {"seed", r.ci.seed}};
  return j;
}

json cascade_cv_report_to_json(const CascadeCvReport& r) {
  json j;
  j["k"] = r.k;
  j["stages"] = json::array();
  for (int s = 0; s < 3; ++s) {
    json stage = cv_report_to_json(r.stages[s]);
    stage["stage"] = s + 1;
    j["stages"].push_back(std::move(stage));
  }
  j["category_accuracy"] = json::object();
  for (const auto& [cat, acc] : r.accuracy.per_category) {
    j["category_accuracy"][cat] = acc;
  }
  j["category_support"] = json::object();
  for (const auto& [cat, n] : r.accuracy.support) {
    j["category_support"][cat] = n;
  }
  j["overall_accuracy"] = r.accuracy.overall;
  return j;
}

std::string model_type_of(const json& j) {
  if (!j.is_object() || !j.contains("model_type")) {
    throw SchemaError("not a model file (missing model_type)");
  }
  return j.at("model_type").get<std::string>();
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << bytes;
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("short write to " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename temporary file onto " + path);
  }
}

void save_json(const json& j, const std::string& path) {
  write_file_atomic(path, j.dump(2) + "\n");
}

json load_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

}  // namespace ruleharvest
