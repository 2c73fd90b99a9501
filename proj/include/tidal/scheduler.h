#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tidal/env.h"
#include "tidal/flow_policy.h"
#include "tidal/motion.h"

namespace tidal {

enum class Protocol { kPaused, kNonPaused };
std::string ProtocolName(Protocol p);
Protocol ParseProtocol(const std::string& name);

// Simulated wall-clock costs, in milliseconds.
struct LatencyModel {
  double t_vlm = 41.0;
  double t_policy_step = 19.0;
  double t_full_baseline = 93.0;
  double control_dt = 20.0;
  Protocol protocol = Protocol::kPaused;

  void Validate() const;
  // World steps that elapse during `ms` of inference (rounded up).
  int StepsFor(double ms) const;
};

enum class ControllerKind { kTidal, kBaseline, kBaselinePlusMotion, kTidalNoMotion, kOracle };
std::string ControllerKindName(ControllerKind k);
ControllerKind ParseControllerKind(const std::string& name);
bool IsTidal(ControllerKind k);
bool UsesMotion(ControllerKind k);

struct ControllerMode {
  ControllerKind kind = ControllerKind::kTidal;
  ChunkingConfig chunking{};
  LatencyModel latency{};
  // Intent lifespan l in steps of trajectory offset; the intent refreshes
  // every l - L + H executed steps. Defaults to L.
  int lifespan = 28;
  int solver_steps = 4;  // baseline multi-step budget

  int RefreshSteps() const;
  void Validate() const;
};

// Networks a controller reads. Both are shared read-only across rollouts.
struct ControllerNets {
  const MotionNet* motion = nullptr;
  const PolicyNets* policy = nullptr;
};

enum class EventKind { kMacroInfer, kMicroInfer, kExecuteStep, kWorldAdvance };
std::string EventKindName(EventKind k);

struct TraceEvent {
  double sim_time_ms = 0.0;
  double duration_ms = 0.0;
  EventKind kind = EventKind::kExecuteStep;
  int chunk_id = -1;
  int cycle_id = -1;  // macro-cycle (intent refresh) index
  int intent_born_step = -1;
  std::uint64_t intent_checksum = 0;
  int solver_steps = 0;
  int world_step = 0;  // world time step after the event
};

struct RolloutTrace {
  std::vector<TraceEvent> events;
  Phase outcome = Phase::kFailed;
  int episode_steps = 0;
  ControllerKind kind = ControllerKind::kTidal;
  Protocol protocol = Protocol::kPaused;
};

struct RolloutResult {
  bool success = false;
  int steps = 0;
  RolloutTrace trace;
};

// Macro-cycle: encode intent, then micro-cycles of (fused state, one Euler
// step, execute N actions) until the intent lifespan is used up.
RolloutResult RunTidalRollout(const EnvConfig& env, const ControllerNets& nets,
                              const ControllerMode& mode, std::uint64_t seed);
// Batch-and-execute: full multi-step inference, then H actions open loop.
RolloutResult RunBaselineRollout(const EnvConfig& env, const ControllerNets& nets,
                                 const ControllerMode& mode, std::uint64_t seed);
RolloutResult RunOracleRollout(const EnvConfig& env, std::uint64_t seed);
// Dispatches on mode.kind.
RolloutResult RunRollout(const EnvConfig& env, const ControllerNets& nets,
                         const ControllerMode& mode, std::uint64_t seed);
// TIDAL rollout with intent lifespan l (l >= L).
RolloutResult LifespanRollout(const EnvConfig& env, const ControllerNets& nets,
                              ControllerMode mode, int lifespan, std::uint64_t seed);

// 1000 / mean period between successive chunk-generation cycles. A trace with
// a single cycle uses that cycle's span.
double EffectiveFrequency(const RolloutTrace& trace);
// 1000 / shortest such period.
double PeakFrequency(const RolloutTrace& trace);

struct AnalyticRates {
  double mean_period_ms = 0.0;
  double min_period_ms = 0.0;
  double effective_hz() const { return 1000.0 / mean_period_ms; }
  double peak_hz() const { return 1000.0 / min_period_ms; }
};
// T_cycle = T_inference + T_execution for each controller.
AnalyticRates AnalyticCycle(const ControllerMode& mode);

// Structural checks over a trace; returns human-readable violations.
std::vector<std::string> CheckTraceInvariants(const RolloutTrace& trace, const ControllerMode& mode);

// One line per event: sim_time duration kind chunk cycle born_step checksum solver_steps world_step.
void WriteTrace(std::ostream& out, const RolloutTrace& trace);

}  // namespace tidal
