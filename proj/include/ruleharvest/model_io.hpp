#pragma once

#include <string>

#include <json.hpp>

#include "ruleharvest/cascade.hpp"
#include "ruleharvest/ensemble.hpp"
#include "ruleharvest/eval.hpp"
#include "ruleharvest/nodeharvest.hpp"

namespace ruleharvest {

// Versioned JSON schemas (schema_version 1). Doubles serialize with
// shortest-round-trip formatting, so save/load is exact and identical models
// produce byte-identical files.

inline constexpr int kModelSchemaVersion = 1;

nlohmann::json forest_to_json(const Forest& f);
Forest forest_from_json(const nlohmann::json& j);

nlohmann::json boosted_to_json(const BoostedEnsemble& b);
BoostedEnsemble boosted_from_json(const nlohmann::json& j);

nlohmann::json harvest_model_to_json(const HarvestModel& m);
HarvestModel harvest_model_from_json(const nlohmann::json& j);

nlohmann::json cascade_model_to_json(const CascadeModel& m);
CascadeModel cascade_model_from_json(const nlohmann::json& j);

nlohmann::json lmsir_model_to_json(const LmsirModel& m);
LmsirModel lmsir_model_from_json(const nlohmann::json& j);

nlohmann::json fold_plan_to_json(const FoldPlan& p);

nlohmann::json cv_report_to_json(const CvReport& r);
nlohmann::json cascade_cv_report_to_json(const CascadeCvReport& r);

// "harvest", "cascade" or "lmsir"; SchemaError on anything else.
std::string model_type_of(const nlohmann::json& j);

// Write via temp file + rename so failures leave no partial output.
void write_file_atomic(const std::string& path, const std::string& bytes);
void save_json(const nlohmann::json& j, const std::string& path);
nlohmann::json load_json(const std::string& path);

}  // namespace ruleharvest
