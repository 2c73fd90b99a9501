#include "tidal/config.h"

#include <set>

#include "tidal/errors.h"

namespace tidal {

namespace {

// Reads known keys from an object and rejects the rest.
class Fields {
 public:
  Fields(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw UsageError(where_ + ": expected a JSON object");
  }

  ~Fields() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw UsageError(where_ + ": unknown key '" + key + "'");
    }
  }

  template <typename T>
  void Get(const std::string& key, T* out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      *out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(where_ + "." + key + ": " + e.what());
    }
  }

  void GetVec2(const std::string& key, Vec2* out) {
    std::vector<double> v{out->x(), out->y()};
    Get(key, &v);
    if (v.size() != 2) throw UsageError(where_ + "." + key + ": expected [x, y]");
    *out = Vec2(v[0], v[1]);
  }

  template <typename Enum>
  void GetEnum(const std::string& key, Enum* out, Enum (*parse)(const std::string&)) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      *out = parse(it->template get<std::string>());
    } catch (const ConfigError& e) {
      throw UsageError(where_ + "." + key + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(where_ + "." + key + ": " + e.what());
    }
  }

  template <typename T, typename Reader>
  void GetNested(const std::string& key, T* out, Reader read) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it != j_.end()) *out = read(*it, *out);
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

Json ToJson(const EnvConfig& c) {
  return Json{{"dt", c.dt},
              {"target_speed_min", c.target_speed_min},
              {"target_speed_max", c.target_speed_max},
              {"turn_at_boundary", c.turn_at_boundary},
              {"boundary_margin", c.boundary_margin},
              {"robot_max_speed", c.robot_max_speed},
              {"grasp_radius", c.grasp_radius},
              {"goal_center", {c.goal_center.x(), c.goal_center.y()}},
              {"goal_radius", c.goal_radius},
              {"max_steps", c.max_steps},
              {"tier", TierName(c.tier)},
              {"ee_start", {c.ee_start.x(), c.ee_start.y()}},
              {"spawn_min", c.spawn_min},
              {"spawn_max", c.spawn_max},
              {"missed_grasp_fails", c.missed_grasp_fails},
              {"grid_resolution", c.grid_resolution},
              {"raster", RasterModeName(c.raster)}};
}

EnvConfig EnvConfigFromJson(const Json& j, EnvConfig c) {
  {
    Fields f(j, "env");
    f.Get("dt", &c.dt);
    f.Get("target_speed_min", &c.target_speed_min);
    f.Get("target_speed_max", &c.target_speed_max);
    f.Get("turn_at_boundary", &c.turn_at_boundary);
    f.Get("boundary_margin", &c.boundary_margin);
    f.Get("robot_max_speed", &c.robot_max_speed);
    f.Get("grasp_radius", &c.grasp_radius);
    f.GetVec2("goal_center", &c.goal_center);
    f.Get("goal_radius", &c.goal_radius);
    f.Get("max_steps", &c.max_steps);
    f.GetEnum("tier", &c.tier, &ParseTier);
    f.GetVec2("ee_start", &c.ee_start);
    f.Get("spawn_min", &c.spawn_min);
    f.Get("spawn_max", &c.spawn_max);
    f.Get("missed_grasp_fails", &c.missed_grasp_fails);
    f.Get("grid_resolution", &c.grid_resolution);
    f.GetEnum("raster", &c.raster, &ParseRasterMode);
  }
  c.Validate();
  return c;
}

Json ToJson(const OracleConfig& c) {
  return Json{{"close_fraction", c.close_fraction}, {"release_fraction", c.release_fraction}};
}

OracleConfig OracleConfigFromJson(const Json& j, OracleConfig c) {
  Fields f(j, "oracle");
  f.Get("close_fraction", &c.close_fraction);
  f.Get("release_fraction", &c.release_fraction);
  return c;
}

Json ToJson(const ChunkingConfig& c) {
  return Json{{"horizon", c.horizon}, {"exec", c.exec}, {"stages", c.stages}};
}

ChunkingConfig ChunkingConfigFromJson(const Json& j, ChunkingConfig c) {
  {
    Fields f(j, "chunking");
    f.Get("horizon", &c.horizon);
    f.Get("exec", &c.exec);
    f.Get("stages", &c.stages);
  }
  c.Validate();
  return c;
}

Json ToJson(const LatencyModel& c) {
  return Json{{"t_vlm", c.t_vlm},
              {"t_policy_step", c.t_policy_step},
              {"t_full_baseline", c.t_full_baseline},
              {"control_dt", c.control_dt},
              {"protocol", ProtocolName(c.protocol)}};
}

LatencyModel LatencyModelFromJson(const Json& j, LatencyModel c) {
  {
    Fields f(j, "latency");
    f.Get("t_vlm", &c.t_vlm);
    f.Get("t_policy_step", &c.t_policy_step);
    f.Get("t_full_baseline", &c.t_full_baseline);
    f.Get("control_dt", &c.control_dt);
    f.GetEnum("protocol", &c.protocol, &ParseProtocol);
  }
  c.Validate();
  return c;
}

Json ToJson(const AdamConfig& c) {
  return Json{{"learning_rate", c.learning_rate},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"epsilon", c.epsilon}};
}

AdamConfig AdamConfigFromJson(const Json& j, AdamConfig c) {
  Fields f(j, "adam");
  f.Get("learning_rate", &c.learning_rate);
  f.Get("beta1", &c.beta1);
  f.Get("beta2", &c.beta2);
  f.Get("epsilon", &c.epsilon);
  return c;
}

Json ToJson(const MotionArch& c) {
  return Json{{"hidden", c.hidden},
              {"embedding_dim", c.embedding_dim},
              {"head_hidden", c.head_hidden},
              {"activation", ActivationName(c.activation)}};
}

MotionArch MotionArchFromJson(const Json& j, MotionArch c) {
  Fields f(j, "motion_arch");
  f.Get("hidden", &c.hidden);
  f.Get("embedding_dim", &c.embedding_dim);
  f.Get("head_hidden", &c.head_hidden);
  f.GetEnum("activation", &c.activation, &ParseActivation);
  return c;
}

Json ToJson(const MotionTrainConfig& c) {
  return Json{{"epochs", c.epochs},
              {"batches_per_epoch", c.batches_per_epoch},
              {"batch_size", c.batch_size},
              {"adam", ToJson(c.adam)},
              {"lambda", {c.weights.position, c.weights.velocity, c.weights.future}},
              {"subject", AuxSubjectName(c.subject)}};
}

MotionTrainConfig MotionTrainConfigFromJson(const Json& j, MotionTrainConfig c) {
  Fields f(j, "motion_train");
  f.Get("epochs", &c.epochs);
  f.Get("batches_per_epoch", &c.batches_per_epoch);
  f.Get("batch_size", &c.batch_size);
  f.GetNested("adam", &c.adam, &AdamConfigFromJson);
  std::vector<double> lambda{c.weights.position, c.weights.velocity, c.weights.future};
  f.Get("lambda", &lambda);
  if (lambda.size() != 3) throw UsageError("motion_train.lambda: expected three weights");
  c.weights = AuxWeights{lambda[0], lambda[1], lambda[2]};
  f.GetEnum("subject", &c.subject, &ParseAuxSubject);
  return c;
}

Json ToJson(const PolicyArch& c) {
  return Json{{"intent_hidden", c.intent_hidden},
              {"intent_dim", c.intent_dim},
              {"field_hidden", c.field_hidden},
              {"field_layers", c.field_layers},
              {"activation", ActivationName(c.activation)}};
}

PolicyArch PolicyArchFromJson(const Json& j, PolicyArch c) {
  Fields f(j, "policy_arch");
  f.Get("intent_hidden", &c.intent_hidden);
  f.Get("intent_dim", &c.intent_dim);
  f.Get("field_hidden", &c.field_hidden);
  f.Get("field_layers", &c.field_layers);
  f.GetEnum("activation", &c.activation, &ParseActivation);
  return c;
}

Json ToJson(const PolicyTrainConfig& c) {
  return Json{{"alpha", c.alpha},
              {"first_weight", c.first_weight},
              {"stages", c.stages},
              {"batch_size", c.batch_size},
              {"steps", c.steps},
              {"adam", ToJson(c.adam)},
              {"final_lr_fraction", c.final_lr_fraction},
              {"log_every", c.log_every},
              {"checkpoint_every", c.checkpoint_every}};
}

PolicyTrainConfig PolicyTrainConfigFromJson(const Json& j, PolicyTrainConfig c) {
  Fields f(j, "policy_train");
  f.Get("alpha", &c.alpha);
  f.Get("first_weight", &c.first_weight);
  f.Get("stages", &c.stages);
  f.Get("batch_size", &c.batch_size);
  f.Get("steps", &c.steps);
  f.GetNested("adam", &c.adam, &AdamConfigFromJson);
  f.Get("final_lr_fraction", &c.final_lr_fraction);
  f.Get("log_every", &c.log_every);
  f.Get("checkpoint_every", &c.checkpoint_every);
  return c;
}

}  // namespace tidal
