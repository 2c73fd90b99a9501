#pragma once

#include <string>

#include <json.hpp>

#include "tidal/dataset.h"
#include "tidal/env.h"
#include "tidal/flow_policy.h"
#include "tidal/mlp.h"
#include "tidal/motion.h"
#include "tidal/oracle.h"
#include "tidal/scheduler.h"

// JSON views of the configuration structs. Readers start from `base` and
// override only the keys present; an unknown key raises UsageError.
namespace tidal {

using Json = nlohmann::ordered_json;

Json ToJson(const EnvConfig& c);
EnvConfig EnvConfigFromJson(const Json& j, EnvConfig base = {});

Json ToJson(const OracleConfig& c);
OracleConfig OracleConfigFromJson(const Json& j, OracleConfig base = {});

Json ToJson(const ChunkingConfig& c);
ChunkingConfig ChunkingConfigFromJson(const Json& j, ChunkingConfig base = {});

Json ToJson(const LatencyModel& c);
LatencyModel LatencyModelFromJson(const Json& j, LatencyModel base = {});

Json ToJson(const AdamConfig& c);
AdamConfig AdamConfigFromJson(const Json& j, AdamConfig base = {});

Json ToJson(const MotionArch& c);
MotionArch MotionArchFromJson(const Json& j, MotionArch base = {});

Json ToJson(const MotionTrainConfig& c);
MotionTrainConfig MotionTrainConfigFromJson(const Json& j, MotionTrainConfig base = {});

Json ToJson(const PolicyArch& c);
PolicyArch PolicyArchFromJson(const Json& j, PolicyArch base = {});

Json ToJson(const PolicyTrainConfig& c);
PolicyTrainConfig PolicyTrainConfigFromJson(const Json& j, PolicyTrainConfig base = {});

}  // namespace tidal
