#include "tidal/scheduler.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>

#include "tidal/errors.h"
#include "tidal/oracle.h"

namespace tidal {

std::string ProtocolName(Protocol p) { return p == Protocol::kPaused ? "paused" : "nonpaused"; }

Protocol ParseProtocol(const std::string& name) {
  if (name == "paused") return Protocol::kPaused;
  if (name == "nonpaused") return Protocol::kNonPaused;
  throw ConfigError("unknown protocol '" + name + "'");
}

void LatencyModel::Validate() const {
  if (t_vlm < 0.0 || t_policy_step < 0.0 || t_full_baseline < 0.0) {
    throw ConfigError("latency: costs must be >= 0");
  }
  if (!(control_dt > 0.0)) throw ConfigError("latency: control_dt must be > 0");
}

int LatencyModel::StepsFor(double ms) const {
  return static_cast<int>(std::ceil(ms / control_dt - 1e-9));
}

std::string ControllerKindName(ControllerKind k) {
  switch (k) {
    case ControllerKind::kTidal:
      return "tidal";
    case ControllerKind::kBaseline:
      return "baseline";
    case ControllerKind::kBaselinePlusMotion:
      return "baseline_plus_motion";
    case ControllerKind::kTidalNoMotion:
      return "tidal_no_motion";
    case ControllerKind::kOracle:
      return "oracle";
  }
  return "tidal";
}

ControllerKind ParseControllerKind(const std::string& name) {
  for (auto k : {ControllerKind::kTidal, ControllerKind::kBaseline, ControllerKind::kBaselinePlusMotion,
                 ControllerKind::kTidalNoMotion, ControllerKind::kOracle}) {
    if (ControllerKindName(k) == name) return k;
  }
  throw ConfigError("unknown controller mode '" + name + "'");
}

bool IsTidal(ControllerKind k) {
  return k == ControllerKind::kTidal || k == ControllerKind::kTidalNoMotion;
}

bool UsesMotion(ControllerKind k) {
  return k == ControllerKind::kTidal || k == ControllerKind::kBaselinePlusMotion;
}

int ControllerMode::RefreshSteps() const {
  return lifespan - chunking.segment_length() + chunking.horizon;
}

void ControllerMode::Validate() const {
  chunking.Validate();
  latency.Validate();
  if (lifespan < chunking.segment_length()) {
    throw ConfigError("controller: lifespan l=" + std::to_string(lifespan) + " is below L=" +
                      std::to_string(chunking.segment_length()));
  }
  if (solver_steps < 1) throw ConfigError("controller: solver_steps must be >= 1");
}

std::string EventKindName(EventKind k) {
  switch (k) {
    case EventKind::kMacroInfer:
      return "macro_infer";
    case EventKind::kMicroInfer:
      return "micro_infer";
    case EventKind::kExecuteStep:
      return "execute_step";
    case EventKind::kWorldAdvance:
      return "world_advance";
  }
  return "execute_step";
}

namespace {

class Rollout {
 public:
  Rollout(const EnvConfig& env, const ControllerNets& nets, const ControllerMode& mode,
          std::uint64_t seed)
      : env_(env), nets_(nets), mode_(mode), env_rng_(DeriveSeed(seed, 0)),
        policy_rng_(DeriveSeed(seed, 1)) {
    mode_.Validate();
    if (mode.kind != ControllerKind::kOracle) {
      if (!nets.policy) throw ConfigError("rollout: policy network missing");
      nets.policy->Validate();
      if (UsesMotion(mode.kind) && !nets.motion) throw ConfigError("rollout: motion network missing");
      if (nets.policy->chunking.horizon != mode.chunking.horizon) {
        throw ConfigError("rollout: policy horizon differs from controller chunking");
      }
      motion_dim_ = nets.policy->fused_dim - kProprioDim;
      if (nets.motion && UsesMotion(mode.kind) && nets.motion->embedding_dim() != motion_dim_) {
        throw ConfigError("rollout: motion embedding does not fit the policy's fused state");
      }
    }
    state_ = EnvReset(env_, env_rng_);
    frames_.push_back(Rasterize(state_, env_));
    trace_.kind = mode.kind;
    trace_.protocol = mode.latency.protocol;
  }

  bool done() const { return state_.terminal(); }
  int time_step() const { return state_.time_step; }

  IntentEmbedding Intent() const {
    IntentEmbedding e =
        EncodeIntent(nets_.policy->intent, frames_.back(), TaskTagFor(env_.tier));
    e.born_step = state_.time_step;
    return e;
  }

  FusedState Fused(bool motion_on) const {
    Vector m = Vector::Zero(motion_dim_);
    if (motion_on) {
      const int t = state_.time_step;
      const int lag = nets_.motion->lag;
      const GridObs past = t >= lag ? frames_[static_cast<std::size_t>(t - lag)]
                                    : GridObs::Zeros(env_.grid_resolution);
      m = MotionForward(*nets_.motion, DiffFrames(frames_.back(), past)).embedding;
    }
    return FuseState(Proprio(state_), m, ContactState(state_));
  }

  SeededRng& policy_rng() { return policy_rng_; }

  void Infer(EventKind kind, double duration, int chunk, int cycle, const IntentEmbedding& intent,
             int solver_steps) {
    TraceEvent ev;
    ev.sim_time_ms = clock_;
    ev.duration_ms = duration;
    ev.kind = kind;
    ev.chunk_id = chunk;
    ev.cycle_id = cycle;
    ev.intent_born_step = intent.born_step;
    ev.intent_checksum = intent.Checksum();
    ev.solver_steps = solver_steps;
    ev.world_step = state_.time_step;
    trace_.events.push_back(ev);
    if (mode_.latency.protocol == Protocol::kNonPaused) {
      const int n = mode_.latency.StepsFor(duration);
      for (int j = 0; j < n && !done(); ++j) {
        Step(Action{0.0, 0.0, state_.gripper_closed ? 1.0 : -1.0});
        TraceEvent adv;
        adv.sim_time_ms = clock_ + j * mode_.latency.control_dt;
        adv.kind = EventKind::kWorldAdvance;
        adv.chunk_id = chunk;
        adv.cycle_id = cycle;
        adv.world_step = state_.time_step;
        trace_.events.push_back(adv);
      }
    }
    clock_ += duration;
  }

  // Executes the first `count` rows of the chunk; returns steps executed.
  int Execute(const ActionChunk& chunk, int count, int chunk_id, int cycle) {
    int executed = 0;
    for (int i = 0; i < count && !done(); ++i) {
      Step(DenormalizeAction(chunk.actions.row(i).data(), env_));
      TraceEvent ev;
      ev.sim_time_ms = clock_;
      ev.duration_ms = mode_.latency.control_dt;
      ev.kind = EventKind::kExecuteStep;
      ev.chunk_id = chunk_id;
      ev.cycle_id = cycle;
      ev.intent_born_step = chunk.intent_born_step;
      ev.world_step = state_.time_step;
      trace_.events.push_back(ev);
      clock_ += mode_.latency.control_dt;
      ++executed;
    }
    return executed;
  }

  RolloutResult Finish() {
    RolloutResult r;
    r.success = state_.phase == Phase::kDone;
    r.steps = state_.time_step;
    trace_.outcome = state_.phase;
    trace_.episode_steps = state_.time_step;
    r.trace = std::move(trace_);
    return r;
  }

 private:
  void Step(const Action& a) {
    state_ = EnvStep(state_, a, env_, env_rng_);
    frames_.push_back(Rasterize(state_, env_));
  }

  const EnvConfig& env_;
  ControllerNets nets_;
  ControllerMode mode_;
  SeededRng env_rng_;
  SeededRng policy_rng_;
  WorldState state_;
  std::vector<GridObs> frames_;  // indexed by world time step
  RolloutTrace trace_;
  double clock_ = 0.0;
  int motion_dim_ = 0;
};

}  // namespace

RolloutResult RunTidalRollout(const EnvConfig& env, const ControllerNets& nets,
                              const ControllerMode& mode, std::uint64_t seed) {
  if (!IsTidal(mode.kind)) throw ConfigError("run_tidal_rollout: mode must be tidal or tidal_no_motion");
  Rollout ro(env, nets, mode, seed);
  const bool motion_on = UsesMotion(mode.kind);
  const int n_exec = mode.chunking.exec;
  const int refresh = mode.RefreshSteps();
  int chunk_id = 0;
  for (int cycle = 0; !ro.done(); ++cycle) {
    const IntentEmbedding intent = ro.Intent();
    ro.Infer(EventKind::kMacroInfer, mode.latency.t_vlm, chunk_id, cycle, intent, 0);
    for (int executed = 0; executed < refresh && !ro.done(); ++chunk_id) {
      const FusedState fused = ro.Fused(motion_on);
      ActionChunk chunk = EulerSingleStep(*nets.policy, ro.policy_rng(), fused, intent);
      chunk.generated_step = ro.time_step();
      ro.Infer(EventKind::kMicroInfer, mode.latency.t_policy_step, chunk_id, cycle, intent, 1);
      if (ro.done()) break;
      // Only the first N actions run; the tail is discarded.
      executed += ro.Execute(chunk, std::min(n_exec, refresh - executed), chunk_id, cycle);
    }
  }
  return ro.Finish();
}

RolloutResult RunBaselineRollout(const EnvConfig& env, const ControllerNets& nets,
                                 const ControllerMode& mode, std::uint64_t seed) {
  if (mode.kind != ControllerKind::kBaseline && mode.kind != ControllerKind::kBaselinePlusMotion) {
    throw ConfigError("run_baseline_rollout: mode must be baseline or baseline_plus_motion");
  }
  Rollout ro(env, nets, mode, seed);
  const bool motion_on = UsesMotion(mode.kind);
  for (int cycle = 0; !ro.done(); ++cycle) {
    const IntentEmbedding intent = ro.Intent();
    const FusedState fused = ro.Fused(motion_on);
    ActionChunk chunk = MultiStepSolve(*nets.policy, ro.policy_rng(), fused, intent, mode.solver_steps);
    chunk.generated_step = ro.time_step();
    ro.Infer(EventKind::kMacroInfer, mode.latency.t_full_baseline, cycle, cycle, intent,
             mode.solver_steps);
    if (ro.done()) break;
    ro.Execute(chunk, mode.chunking.horizon, cycle, cycle);
  }
  return ro.Finish();
}

RolloutResult RunOracleRollout(const EnvConfig& env, std::uint64_t seed) {
  SeededRng env_rng(DeriveSeed(seed, 0));
  WorldState s = EnvReset(env, env_rng);
  RolloutResult r;
  r.trace.kind = ControllerKind::kOracle;
  double clock = 0.0;
  int step = 0;
  while (!s.terminal()) {
    s = EnvStep(s, OracleAction(s, env), env, env_rng);
    TraceEvent ev;
    ev.sim_time_ms = clock;
    ev.duration_ms = 20.0;
    ev.kind = EventKind::kExecuteStep;
    ev.chunk_id = step;
    ev.cycle_id = step;
    ev.world_step = s.time_step;
    r.trace.events.push_back(ev);
    clock += 20.0;
    ++step;
  }
  r.success = s.phase == Phase::kDone;
  r.steps = s.time_step;
  r.trace.outcome = s.phase;
  r.trace.episode_steps = s.time_step;
  return r;
}

RolloutResult RunRollout(const EnvConfig& env, const ControllerNets& nets,
                         const ControllerMode& mode, std::uint64_t seed) {
  if (mode.kind == ControllerKind::kOracle) return RunOracleRollout(env, seed);
  if (IsTidal(mode.kind)) return RunTidalRollout(env, nets, mode, seed);
  return RunBaselineRollout(env, nets, mode, seed);
}

RolloutResult LifespanRollout(const EnvConfig& env, const ControllerNets& nets,
                              ControllerMode mode, int lifespan, std::uint64_t seed) {
  if (lifespan < mode.chunking.segment_length()) {
    throw ConfigError("lifespan_rollout: l must be >= L = " +
                      std::to_string(mode.chunking.segment_length()));
  }
  mode.lifespan = lifespan;
  return RunTidalRollout(env, nets, mode, seed);
}

namespace {

// Start time of each chunk's cycle, in chunk order, plus the trace end.
std::vector<double> CycleStarts(const RolloutTrace& trace, double* end) {
  std::map<int, double> starts;
  *end = 0.0;
  for (const auto& ev : trace.events) {
    *end = std::max(*end, ev.sim_time_ms + ev.duration_ms);
    if (ev.chunk_id < 0) continue;
    auto it = starts.find(ev.chunk_id);
    if (it == starts.end()) {
      starts.emplace(ev.chunk_id, ev.sim_time_ms);
    } else {
      it->second = std::min(it->second, ev.sim_time_ms);
    }
  }
  std::vector<double> out;
  for (const auto& [id, t] : starts) out.push_back(t);
  return out;
}

std::vector<double> CyclePeriods(const RolloutTrace& trace) {
  double end = 0.0;
  const std::vector<double> starts = CycleStarts(trace, &end);
  if (starts.empty()) throw AnalysisError("effective_frequency: trace has no complete cycle");
  std::vector<double> periods;
  if (starts.size() == 1) {
    periods.push_back(end - starts.front());
  } else {
    for (std::size_t i = 1; i < starts.size(); ++i) periods.push_back(starts[i] - starts[i - 1]);
  }
  return periods;
}

}  // namespace

double EffectiveFrequency(const RolloutTrace& trace) {
  const auto periods = CyclePeriods(trace);
  double sum = 0.0;
  for (double p : periods) sum += p;
  const double mean = sum / static_cast<double>(periods.size());
  if (!(mean > 0.0)) throw AnalysisError("effective_frequency: non-positive cycle period");
  return 1000.0 / mean;
}

double PeakFrequency(const RolloutTrace& trace) {
  const auto periods = CyclePeriods(trace);
  const double shortest = *std::min_element(periods.begin(), periods.end());
  if (!(shortest > 0.0)) throw AnalysisError("peak_frequency: non-positive cycle period");
  return 1000.0 / shortest;
}

AnalyticRates AnalyticCycle(const ControllerMode& mode) {
  const auto& lat = mode.latency;
  const auto& ch = mode.chunking;
  AnalyticRates r;
  if (IsTidal(mode.kind)) {
    const int refresh = mode.RefreshSteps();
    const int chunks = (refresh + ch.exec - 1) / ch.exec;
    const double micro = lat.t_policy_step + ch.exec * lat.control_dt;
    r.min_period_ms = micro;
    r.mean_period_ms = (lat.t_vlm + chunks * lat.t_policy_step + refresh * lat.control_dt) / chunks;
  } else if (mode.kind == ControllerKind::kOracle) {
    r.min_period_ms = r.mean_period_ms = lat.control_dt;
  } else {
    r.min_period_ms = r.mean_period_ms = lat.t_full_baseline + ch.horizon * lat.control_dt;
  }
  return r;
}

std::vector<std::string> CheckTraceInvariants(const RolloutTrace& trace, const ControllerMode& mode) {
  std::vector<std::string> errors;
  const auto& ev = trace.events;
  for (std::size_t i = 1; i < ev.size(); ++i) {
    if (ev[i].sim_time_ms < ev[i - 1].sim_time_ms) {
      errors.push_back("events out of time order at index " + std::to_string(i));
      break;
    }
  }

  struct Cycle {
    int macro = 0;
    int micro = 0;
    int solver_steps = 0;
    int executed = 0;
    int advances = 0;
    int expected_advances = 0;
    double macro_ms = 0.0;
    bool bad_cost = false;
    std::vector<int> born;
    std::vector<std::uint64_t> sums;
  };
  std::map<int, Cycle> cycles;
  std::map<int, int> infer_per_chunk;
  const auto& lat = mode.latency;
  for (const auto& e : ev) {
    Cycle& c = cycles[e.cycle_id];
    switch (e.kind) {
      case EventKind::kMacroInfer:
        ++c.macro;
        c.solver_steps += e.solver_steps;
        c.macro_ms += e.duration_ms;
        c.expected_advances += lat.StepsFor(e.duration_ms);
        c.born.push_back(e.intent_born_step);
        c.sums.push_back(e.intent_checksum);
        if (!IsTidal(mode.kind)) {
          ++infer_per_chunk[e.chunk_id];
          if (e.duration_ms != lat.t_full_baseline) c.bad_cost = true;
        } else if (e.duration_ms != lat.t_vlm) {
          c.bad_cost = true;
        }
        break;
      case EventKind::kMicroInfer:
        ++c.micro;
        ++infer_per_chunk[e.chunk_id];
        c.solver_steps += e.solver_steps;
        c.expected_advances += lat.StepsFor(e.duration_ms);
        c.born.push_back(e.intent_born_step);
        c.sums.push_back(e.intent_checksum);
        if (e.duration_ms != lat.t_policy_step || e.solver_steps != 1) c.bad_cost = true;
        break;
      case EventKind::kExecuteStep:
        ++c.executed;
        if (infer_per_chunk[e.chunk_id] != 1) {
          errors.push_back("execute step at t=" + std::to_string(e.world_step) +
                           " does not belong to exactly one chunk");
        }
        break;
      case EventKind::kWorldAdvance:
        ++c.advances;
        break;
    }
  }

  if (lat.protocol == Protocol::kPaused) {
    for (const auto& [id, c] : cycles) {
      if (c.advances != 0) errors.push_back("paused protocol recorded world advances");
    }
  }

  // The last cycle may have been cut short by the episode ending.
  const int last_cycle = cycles.empty() ? -1 : cycles.rbegin()->first;
  const bool tidal = IsTidal(mode.kind);
  const int refresh = mode.RefreshSteps();
  const int micro_expected = (refresh + mode.chunking.exec - 1) / mode.chunking.exec;
  for (const auto& [id, c] : cycles) {
    if (id == last_cycle) continue;
    const std::string tag = "cycle " + std::to_string(id) + ": ";
    if (c.macro != 1) errors.push_back(tag + "expected exactly one backbone inference");
    if (c.bad_cost) errors.push_back(tag + "inference charged an unexpected cost");
    if (tidal) {
      if (c.micro != micro_expected) errors.push_back(tag + "wrong number of micro inferences");
      if (c.executed != refresh) errors.push_back(tag + "executed " + std::to_string(c.executed) + " steps");
      for (std::size_t i = 1; i < c.born.size(); ++i) {
        if (c.born[i] != c.born[0] || c.sums[i] != c.sums[0]) {
          errors.push_back(tag + "intent changed within a macro-cycle");
          break;
        }
      }
      if (refresh == mode.chunking.stages * mode.chunking.exec && c.solver_steps != mode.chunking.stages) {
        errors.push_back(tag + "policy-step budget differs from K");
      }
    } else {
      if (c.micro != 0) errors.push_back(tag + "baseline issued micro inferences");
      if (c.solver_steps != mode.solver_steps) errors.push_back(tag + "solver budget mismatch");
      if (c.executed != mode.chunking.horizon) {
        errors.push_back(tag + "executed " + std::to_string(c.executed) + " steps, expected H");
      }
    }
    if (lat.protocol == Protocol::kNonPaused && c.advances != c.expected_advances) {
      errors.push_back(tag + "world advances " + std::to_string(c.advances) + " != " +
                       std::to_string(c.expected_advances));
    }
  }
  return errors;
}

void WriteTrace(std::ostream& out, const RolloutTrace& trace) {
  out << "# kind " << ControllerKindName(trace.kind) << " protocol " << ProtocolName(trace.protocol)
      << " outcome " << PhaseName(trace.outcome) << " steps " << trace.episode_steps << '\n';
  out << std::setprecision(17);
  for (const auto& e : trace.events) {
    out << e.sim_time_ms << ' ' << e.duration_ms << ' ' << EventKindName(e.kind) << ' ' << e.chunk_id
        << ' ' << e.cycle_id << ' ' << e.intent_born_step << ' ' << e.intent_checksum << ' '
        << e.solver_steps << ' ' << e.world_step << '\n';
  }
}

}  // namespace tidal
