#include <doctest.h>

#include <sstream>

#include "tidal/errors.h"
#include "tidal/scheduler.h"

namespace tidal {
namespace {

struct Fixture {
  MotionNet motion;
  PolicyNets policy;
  PolicyNets policy_sync;  // H = N = 4, K = 1

  ControllerNets Nets() const { return {&motion, &policy}; }
};

const Fixture& Shared() {
  static const Fixture f = [] {
    Fixture x;
    SeededRng rng(31);
    x.motion = MakeMotionNet(16, 16, 8, 8, rng);
    PolicyArch arch;
    arch.intent_hidden = 16;
    arch.intent_dim = 8;
    arch.field_hidden = 32;
    x.policy = MakePolicyNets(arch, ChunkingConfig{}, 256, 12, true, rng);
    x.policy_sync = MakePolicyNets(arch, ChunkingConfig{4, 4, 1}, 256, 12, true, rng);
    return x;
  }();
  return f;
}

// Long episodes exercise many cycles: empty-space grasps do not end them.
EnvConfig LongEnv(Tier tier = Tier::kEasy) {
  EnvConfig cfg;
  cfg.tier = tier;
  cfg.missed_grasp_fails = false;
  cfg.max_steps = 200;
  return cfg;
}

ControllerMode Mode(ControllerKind kind, Protocol protocol) {
  ControllerMode m;
  m.kind = kind;
  m.latency.protocol = protocol;
  return m;
}

int CountKind(const RolloutTrace& trace, EventKind kind) {
  int n = 0;
  for (const auto& ev : trace.events) n += ev.kind == kind;
  return n;
}

TEST_CASE("latency rounding and lifespan mapping") {
  const LatencyModel lat;
  CHECK(lat.StepsFor(41.0) == 3);
  CHECK(lat.StepsFor(19.0) == 1);
  CHECK(lat.StepsFor(93.0) == 5);
  CHECK(lat.StepsFor(20.0) == 1);
  CHECK(lat.StepsFor(0.0) == 0);

  ControllerMode m;
  CHECK(m.RefreshSteps() == 16);
  m.lifespan = 56;
  CHECK(m.RefreshSteps() == 44);
  m.lifespan = 27;
  CHECK_THROWS_AS(m.Validate(), ConfigError);

  LatencyModel bad;
  bad.control_dt = 0.0;
  CHECK_THROWS_AS(bad.Validate(), ConfigError);
  bad = LatencyModel{};
  bad.t_vlm = -1.0;
  CHECK_THROWS_AS(bad.Validate(), ConfigError);
}

TEST_CASE("analytic cycle rates") {
  const AnalyticRates tidal = AnalyticCycle(Mode(ControllerKind::kTidal, Protocol::kPaused));
  CHECK(tidal.mean_period_ms == doctest::Approx(109.25));
  CHECK(tidal.min_period_ms == doctest::Approx(99.0));
  CHECK(tidal.effective_hz() == doctest::Approx(9.153).epsilon(1e-3));
  CHECK(tidal.peak_hz() == doctest::Approx(10.101).epsilon(1e-3));
  const AnalyticRates base = AnalyticCycle(Mode(ControllerKind::kBaseline, Protocol::kPaused));
  CHECK(base.mean_period_ms == doctest::Approx(413.0));
  CHECK(base.effective_hz() == doctest::Approx(2.421).epsilon(1e-3));
}

TEST_CASE("synthetic traces") {
  RolloutTrace t;
  for (int i = 0; i < 5; ++i) {
    TraceEvent ev;
    ev.kind = EventKind::kMacroInfer;
    ev.sim_time_ms = 413.0 * i;
    ev.duration_ms = 93.0;
    ev.chunk_id = i;
    t.events.push_back(ev);
  }
  CHECK(EffectiveFrequency(t) == doctest::Approx(1000.0 / 413.0));

  RolloutTrace single;
  TraceEvent infer;
  infer.kind = EventKind::kMacroInfer;
  infer.duration_ms = 93.0;
  infer.chunk_id = 0;
  single.events.push_back(infer);
  for (int i = 0; i < 16; ++i) {
    TraceEvent ex;
    ex.kind = EventKind::kExecuteStep;
    ex.sim_time_ms = 93.0 + 20.0 * i;
    ex.duration_ms = 20.0;
    ex.chunk_id = 0;
    single.events.push_back(ex);
  }
  CHECK(EffectiveFrequency(single) == doctest::Approx(1000.0 / 413.0));

  CHECK_THROWS_AS(EffectiveFrequency(RolloutTrace{}), AnalysisError);
  CHECK_THROWS_AS(PeakFrequency(RolloutTrace{}), AnalysisError);
}

TEST_CASE("measured frequencies match the analytic cycle") {
  const Fixture& f = Shared();
  const EnvConfig env = LongEnv();
  for (ControllerKind kind : {ControllerKind::kTidal, ControllerKind::kBaseline}) {
    const ControllerMode mode = Mode(kind, Protocol::kPaused);
    const RolloutResult r = RunRollout(env, f.Nets(), mode, 5);
    const AnalyticRates a = AnalyticCycle(mode);
    CAPTURE(ControllerKindName(kind));
    CHECK(std::abs(EffectiveFrequency(r.trace) / a.effective_hz() - 1.0) <= 0.02);
    CHECK(PeakFrequency(r.trace) == doctest::Approx(a.peak_hz()));
  }
  const RolloutResult tidal = RunRollout(env, f.Nets(), Mode(ControllerKind::kTidal, Protocol::kPaused), 6);
  const double hz = EffectiveFrequency(tidal.trace);
  CHECK(hz >= 8.5);
  CHECK(hz <= 9.5);
}

TEST_CASE("trace invariants over random rollouts") {
  const Fixture& f = Shared();
  const EnvConfig env = LongEnv();
  for (ControllerKind kind : {ControllerKind::kTidal, ControllerKind::kTidalNoMotion,
                              ControllerKind::kBaseline, ControllerKind::kBaselinePlusMotion}) {
    for (Protocol protocol : {Protocol::kPaused, Protocol::kNonPaused}) {
      const ControllerMode mode = Mode(kind, protocol);
      for (int seed = 0; seed < 50; ++seed) {
        const RolloutResult r = RunRollout(env, f.Nets(), mode, DeriveSeed(seed, 0x5c));
        const auto violations = CheckTraceInvariants(r.trace, mode);
        CAPTURE(ControllerKindName(kind));
        CAPTURE(ProtocolName(protocol));
        CHECK(violations.empty());
        if (!violations.empty()) MESSAGE(violations.front());
        if (protocol == Protocol::kPaused) CHECK(CountKind(r.trace, EventKind::kWorldAdvance) == 0);
      }
    }
  }
}

TEST_CASE("tidal cycle structure") {
  const Fixture& f = Shared();
  const ControllerMode mode = Mode(ControllerKind::kTidal, Protocol::kNonPaused);
  const RolloutResult r = RunRollout(LongEnv(), f.Nets(), mode, 3);
  const auto& ev = r.trace.events;
  REQUIRE(ev.size() > 30);
  // macro (41 ms, 3 advances), micro (19 ms, 1 advance), 4 executes.
  CHECK(ev[0].kind == EventKind::kMacroInfer);
  CHECK(ev[0].duration_ms == 41.0);
  for (int i = 1; i <= 3; ++i) CHECK(ev[static_cast<std::size_t>(i)].kind == EventKind::kWorldAdvance);
  CHECK(ev[4].kind == EventKind::kMicroInfer);
  CHECK(ev[4].solver_steps == 1);
  CHECK(ev[5].kind == EventKind::kWorldAdvance);
  for (int i = 6; i < 10; ++i) CHECK(ev[static_cast<std::size_t>(i)].kind == EventKind::kExecuteStep);
  CHECK(ev[10].kind == EventKind::kMicroInfer);

  // Every micro-step in the first cycle sees the same frozen intent.
  for (const auto& e : ev) {
    if (e.cycle_id != 0 || e.kind != EventKind::kMicroInfer) continue;
    CHECK(e.intent_born_step == ev[0].intent_born_step);
    CHECK(e.intent_checksum == ev[0].intent_checksum);
  }
}

TEST_CASE("nonpaused baseline waits five world steps before executing") {
  const Fixture& f = Shared();
  const ControllerMode mode = Mode(ControllerKind::kBaseline, Protocol::kNonPaused);
  const RolloutResult r = RunRollout(LongEnv(), f.Nets(), mode, 4);
  const auto& ev = r.trace.events;
  REQUIRE(ev.size() > 22);
  CHECK(ev[0].kind == EventKind::kMacroInfer);
  CHECK(ev[0].solver_steps == 4);
  CHECK(ev[0].duration_ms == 93.0);
  for (int i = 1; i <= 5; ++i) CHECK(ev[static_cast<std::size_t>(i)].kind == EventKind::kWorldAdvance);
  for (int i = 6; i < 22; ++i) CHECK(ev[static_cast<std::size_t>(i)].kind == EventKind::kExecuteStep);
  CHECK(ev[5].world_step == 5);
}

TEST_CASE("paused protocol freezes the world during inference") {
  const Fixture& f = Shared();
  const ControllerMode mode = Mode(ControllerKind::kBaseline, Protocol::kPaused);
  const RolloutResult r = RunRollout(LongEnv(), f.Nets(), mode, 4);
  CHECK(r.trace.events[0].world_step == 0);
  CHECK(r.trace.events[1].kind == EventKind::kExecuteStep);
  CHECK(r.trace.events[1].world_step == 1);
}

TEST_CASE("lifespan rollouts") {
  const Fixture& f = Shared();
  ControllerMode mode = Mode(ControllerKind::kTidal, Protocol::kPaused);
  const RolloutResult r = LifespanRollout(LongEnv(), f.Nets(), mode, 56, 8);
  int first_cycle_steps = 0;
  for (const auto& ev : r.trace.events) {
    first_cycle_steps += ev.kind == EventKind::kExecuteStep && ev.cycle_id == 0;
  }
  CHECK(first_cycle_steps == 44);
  mode.lifespan = 56;
  CHECK(CheckTraceInvariants(r.trace, mode).empty());
  CHECK_THROWS_AS(LifespanRollout(LongEnv(), f.Nets(), mode, 27, 8), ConfigError);

  // l = L with K = 1 and H = N: one macro, one micro, N steps per cycle.
  ControllerMode sync = mode;
  sync.chunking = ChunkingConfig{4, 4, 1};
  const RolloutResult s = LifespanRollout(LongEnv(), {&f.motion, &f.policy_sync}, sync, 4, 8);
  sync.lifespan = 4;
  CHECK(CheckTraceInvariants(s.trace, sync).empty());
  CHECK(CountKind(s.trace, EventKind::kMacroInfer) == CountKind(s.trace, EventKind::kMicroInfer));
}

TEST_CASE("rollouts are deterministic per seed") {
  const Fixture& f = Shared();
  for (ControllerKind kind : {ControllerKind::kTidal, ControllerKind::kBaseline}) {
    const ControllerMode mode = Mode(kind, Protocol::kNonPaused);
    std::ostringstream a, b, c;
    WriteTrace(a, RunRollout(LongEnv(), f.Nets(), mode, 77).trace);
    WriteTrace(b, RunRollout(LongEnv(), f.Nets(), mode, 77).trace);
    WriteTrace(c, RunRollout(LongEnv(), f.Nets(), mode, 78).trace);
    CHECK(a.str() == b.str());
    CHECK(a.str() != c.str());
  }
}

TEST_CASE("oracle rollout is a calibration controller") {
  EnvConfig env;
  int ok = 0;
  for (int seed = 0; seed < 50; ++seed) ok += RunOracleRollout(env, DeriveSeed(seed, 1)).success;
  CHECK(ok >= 48);
}

TEST_CASE("mode and net checks") {
  const Fixture& f = Shared();
  const EnvConfig env = LongEnv();
  CHECK_THROWS_AS(RunRollout(env, {&f.motion, nullptr}, Mode(ControllerKind::kTidal, Protocol::kPaused), 1),
                  ConfigError);
  CHECK_THROWS_AS(RunRollout(env, {nullptr, &f.policy}, Mode(ControllerKind::kTidal, Protocol::kPaused), 1),
                  ConfigError);
  CHECK_THROWS_AS(RunTidalRollout(env, f.Nets(), Mode(ControllerKind::kBaseline, Protocol::kPaused), 1),
                  ConfigError);
  CHECK_THROWS_AS(RunBaselineRollout(env, f.Nets(), Mode(ControllerKind::kTidal, Protocol::kPaused), 1),
                  ConfigError);
  CHECK_NOTHROW(RunRollout(env, {nullptr, &f.policy}, Mode(ControllerKind::kTidalNoMotion, Protocol::kPaused), 1));
  CHECK(ParseControllerKind("baseline_plus_motion") == ControllerKind::kBaselinePlusMotion);
  CHECK_THROWS_AS(ParseControllerKind("fast"), ConfigError);
  CHECK(ParseProtocol("nonpaused") == Protocol::kNonPaused);
}

}  // namespace
}  // namespace tidal
