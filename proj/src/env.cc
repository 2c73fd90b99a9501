#include "tidal/env.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "tidal/errors.h"

namespace tidal {

namespace {

Vec2 ClampToWorkspace(const Vec2& p) {
  return {std::clamp(p.x(), 0.0, 1.0), std::clamp(p.y(), 0.0, 1.0)};
}

bool PushesIntoWall(const Vec2& p, const Vec2& v, double margin) {
  return (p.x() >= 1.0 - margin && v.x() > 0.0) || (p.x() <= margin && v.x() < 0.0) ||
         (p.y() >= 1.0 - margin && v.y() > 0.0) || (p.y() <= margin && v.y() < 0.0);
}

void MoveFreeTarget(WorldState& s, const EnvConfig& cfg, SeededRng& rng) {
  if (s.target_vel.isZero(0.0)) return;
  s.target_pos = ClampToWorkspace(s.target_pos + s.target_vel * cfg.dt);
  const double m = cfg.boundary_margin;
  if (!PushesIntoWall(s.target_pos, s.target_vel, m)) return;
  if (cfg.turn_at_boundary) {
    const Vec2 v = s.target_vel;
    s.target_vel = rng.Coin() ? Vec2(-v.y(), v.x()) : Vec2(v.y(), -v.x());
    // Corner: the turned heading may still point at a touched wall.
    if (PushesIntoWall(s.target_pos, s.target_vel, m)) s.target_vel = -s.target_vel;
  } else {
    if ((s.target_pos.x() >= 1.0 - m && s.target_vel.x() > 0.0) ||
        (s.target_pos.x() <= m && s.target_vel.x() < 0.0)) {
      s.target_vel.x() = -s.target_vel.x();
    }
    if ((s.target_pos.y() >= 1.0 - m && s.target_vel.y() > 0.0) ||
        (s.target_pos.y() <= m && s.target_vel.y() < 0.0)) {
      s.target_vel.y() = -s.target_vel.y();
    }
  }
}

void Splat(GridObs& g, const Vec2& p, double intensity, RasterMode mode) {
  const int n = g.resolution;
  auto cell = [n](double x) { return std::clamp(static_cast<int>(std::floor(x * n)), 0, n - 1); };
  if (mode == RasterMode::kNearest) {
    g.cells[static_cast<std::size_t>(cell(p.y()) * n + cell(p.x()))] += intensity;
    return;
  }
  // Bilinear splat around cell centers; weight falling off the grid is
  // folded back onto the edge cell.
  const double ux = p.x() * n - 0.5;
  const double uy = p.y() * n - 0.5;
  const int x0 = static_cast<int>(std::floor(ux));
  const int y0 = static_cast<int>(std::floor(uy));
  const double fx = ux - x0;
  const double fy = uy - y0;
  const int xs[2] = {std::clamp(x0, 0, n - 1), std::clamp(x0 + 1, 0, n - 1)};
  const int ys[2] = {std::clamp(y0, 0, n - 1), std::clamp(y0 + 1, 0, n - 1)};
  const double wx[2] = {1.0 - fx, fx};
  const double wy[2] = {1.0 - fy, fy};
  for (int j = 0; j < 2; ++j) {
    for (int i = 0; i < 2; ++i) {
      g.cells[static_cast<std::size_t>(ys[j] * n + xs[i])] += intensity * wx[i] * wy[j];
    }
  }
}

}  // namespace

std::string TierName(Tier t) {
  switch (t) {
    case Tier::kEasy:
      return "easy";
    case Tier::kHard:
      return "hard";
    case Tier::kStatic:
      return "static";
  }
  return "easy";
}

Tier ParseTier(const std::string& name) {
  if (name == "easy") return Tier::kEasy;
  if (name == "hard") return Tier::kHard;
  if (name == "static") return Tier::kStatic;
  throw ConfigError("unknown tier '" + name + "'");
}

std::string PhaseName(Phase p) {
  switch (p) {
    case Phase::kApproach:
      return "approach";
    case Phase::kCarry:
      return "carry";
    case Phase::kDone:
      return "done";
    case Phase::kFailed:
      return "failed";
  }
  return "approach";
}

namespace {
Phase ParsePhase(const std::string& name) {
  if (name == "approach") return Phase::kApproach;
  if (name == "carry") return Phase::kCarry;
  if (name == "done") return Phase::kDone;
  if (name == "failed") return Phase::kFailed;
  throw ConfigError("unknown phase '" + name + "'");
}
}  // namespace

std::string RasterModeName(RasterMode m) { return m == RasterMode::kNearest ? "nearest" : "bilinear"; }

RasterMode ParseRasterMode(const std::string& name) {
  if (name == "nearest") return RasterMode::kNearest;
  if (name == "bilinear") return RasterMode::kBilinear;
  throw ConfigError("unknown raster mode '" + name + "'");
}

void EnvConfig::Validate() const {
  if (!(dt > 0.0)) throw ConfigError("env: dt must be > 0");
  if (!(grasp_radius > 0.0 && grasp_radius < goal_radius && goal_radius < 0.5)) {
    throw ConfigError("env: need 0 < grasp_radius < goal_radius < 0.5");
  }
  if (!(target_speed_min >= 0.0 && target_speed_min <= target_speed_max)) {
    throw ConfigError("env: bad target speed range");
  }
  if (!(robot_max_speed > target_speed_max)) {
    throw ConfigError("env: robot must be faster than the target");
  }
  if (max_steps <= 0) throw ConfigError("env: max_steps must be positive");
  if (grid_resolution <= 0) throw ConfigError("env: grid resolution must be positive");
}

std::string EnvConfig::Canonical() const {
  std::ostringstream os;
  os << std::setprecision(17) << "dt=" << dt << ";speed=" << target_speed_min << ","
     << target_speed_max << ";turn=" << turn_at_boundary << ";margin=" << boundary_margin
     << ";vmax=" << robot_max_speed << ";grasp=" << grasp_radius << ";goal=" << goal_center.x()
     << "," << goal_center.y() << "," << goal_radius << ";max_steps=" << max_steps
     << ";tier=" << TierName(tier) << ";start=" << ee_start.x() << "," << ee_start.y()
     << ";spawn=" << spawn_min << "," << spawn_max << ";miss_fails=" << missed_grasp_fails
     << ";grid=" << grid_resolution << ";raster=" << RasterModeName(raster);
  return os.str();
}

Action ClipAction(const Action& a, const EnvConfig& cfg) {
  Action out = a;
  if (!std::isfinite(out.dx)) out.dx = 0.0;
  if (!std::isfinite(out.dy)) out.dy = 0.0;
  if (!std::isfinite(out.grip)) out.grip = -1.0;
  const double limit = cfg.max_step();
  const double norm = std::hypot(out.dx, out.dy);
  if (norm > limit) {
    out.dx *= limit / norm;
    out.dy *= limit / norm;
    // Rounding can leave the norm one ulp above the limit; keep the clip idempotent.
    while (std::hypot(out.dx, out.dy) > limit) {
      out.dx = std::nextafter(out.dx, 0.0);
      out.dy = std::nextafter(out.dy, 0.0);
    }
  }
  out.grip = std::clamp(out.grip, -1.0, 1.0);
  return out;
}

GridObs GridObs::Zeros(int resolution) {
  GridObs g;
  g.resolution = resolution;
  g.cells.assign(static_cast<std::size_t>(resolution * resolution), 0.0);
  return g;
}

WorldState EnvReset(const EnvConfig& cfg, SeededRng& rng) {
  cfg.Validate();
  WorldState s;
  s.ee_pos = cfg.ee_start;
  s.target_pos = {rng.Uniform(cfg.spawn_min, cfg.spawn_max),
                  rng.Uniform(cfg.spawn_min, cfg.spawn_max)};
  const double speed = rng.Uniform(cfg.target_speed_min, cfg.target_speed_max);
  const bool along_x = rng.Coin();
  switch (cfg.tier) {
    case Tier::kEasy:
      s.target_vel = along_x ? Vec2(speed, 0.0) : Vec2(0.0, speed);
      break;
    case Tier::kHard:
      s.target_vel = along_x ? Vec2(-speed, 0.0) : Vec2(0.0, -speed);
      break;
    case Tier::kStatic:
      s.target_vel = Vec2::Zero();
      break;
  }
  return s;
}

WorldState EnvStep(const WorldState& state, const Action& action, const EnvConfig& cfg,
                   SeededRng& rng) {
  if (state.terminal()) throw ProtocolError("env_step called on a terminal state");
  const Action a = ClipAction(action, cfg);
  WorldState s = state;
  s.time_step += 1;

  Vec2 lo(0.0, 0.0), hi(1.0, 1.0);
  if (s.held) {
    // Keep the carried target inside the workspace as well.
    lo = lo.cwiseMax(-s.grasp_offset);
    hi = hi.cwiseMin(Vec2(1.0, 1.0) - s.grasp_offset);
  }
  s.ee_pos = (s.ee_pos + Vec2(a.dx, a.dy)).cwiseMax(lo).cwiseMin(hi);

  if (s.held) {
    s.target_pos = s.ee_pos + s.grasp_offset;
  } else {
    MoveFreeTarget(s, cfg, rng);
  }

  const bool want_closed = a.grip > 0.0;
  if (want_closed && !s.held) {
    if ((s.ee_pos - s.target_pos).norm() <= cfg.grasp_radius) {
      s.held = true;
      s.grasp_offset = s.target_pos - s.ee_pos;
      s.phase = Phase::kCarry;
    } else if (!s.gripper_closed && cfg.missed_grasp_fails) {
      s.phase = Phase::kFailed;
    }
  } else if (!want_closed && s.held) {
    s.held = false;
    s.phase = (s.target_pos - cfg.goal_center).norm() <= cfg.goal_radius ? Phase::kDone
                                                                          : Phase::kApproach;
  }
  s.gripper_closed = want_closed;

  if (!s.terminal() && s.time_step >= cfg.max_steps) s.phase = Phase::kFailed;
  return s;
}

WorldState EnvAdvanceFree(const WorldState& state, const EnvConfig& cfg, SeededRng& rng, int n) {
  if (n < 0) throw ConfigError("env_advance_free: n must be >= 0");
  WorldState s = state;
  const Action hold{0.0, 0.0, s.gripper_closed ? 1.0 : -1.0};
  for (int i = 0; i < n && !s.terminal(); ++i) s = EnvStep(s, hold, cfg, rng);
  return s;
}

GridObs Rasterize(const WorldState& state, const EnvConfig& cfg) {
  GridObs g = GridObs::Zeros(cfg.grid_resolution);
  Splat(g, state.target_pos, GridObs::kTargetIntensity, cfg.raster);
  Splat(g, state.ee_pos, GridObs::kEffectorIntensity, cfg.raster);
  Splat(g, cfg.goal_center, GridObs::kGoalIntensity, cfg.raster);
  return g;
}

int ContactState(const WorldState& state) { return state.held ? 1 : 0; }

std::array<double, 4> Proprio(const WorldState& state) {
  return {state.ee_pos.x(), state.ee_pos.y(), state.gripper_closed ? 1.0 : 0.0,
          state.held ? 1.0 : 0.0};
}

void WriteTraceLine(std::ostream& out, const WorldState& s, const Action& a) {
  out << std::setprecision(17) << s.time_step << ' ' << s.ee_pos.x() << ' ' << s.ee_pos.y() << ' '
      << int{s.gripper_closed} << ' ' << s.target_pos.x() << ' ' << s.target_pos.y() << ' '
      << s.target_vel.x() << ' ' << s.target_vel.y() << ' ' << int{s.held} << ' '
      << s.grasp_offset.x() << ' ' << s.grasp_offset.y() << ' ' << PhaseName(s.phase) << ' '
      << a.dx << ' ' << a.dy << ' ' << a.grip << ' ' << ContactState(s) << '\n';
}

TraceLine ParseTraceLine(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> tok;
  for (std::string t; is >> t;) tok.push_back(t);
  if (tok.size() != 16) throw ConfigError("trace line: expected 16 fields, got " + std::to_string(tok.size()));
  auto d = [&tok](int i) { return std::strtod(tok[static_cast<std::size_t>(i)].c_str(), nullptr); };
  TraceLine r;
  r.state.time_step = std::stoi(tok[0]);
  r.state.ee_pos = {d(1), d(2)};
  r.state.gripper_closed = tok[3] == "1";
  r.state.target_pos = {d(4), d(5)};
  r.state.target_vel = {d(6), d(7)};
  r.state.held = tok[8] == "1";
  r.state.grasp_offset = {d(9), d(10)};
  r.state.phase = ParsePhase(tok[11]);
  r.action = {d(12), d(13), d(14)};
  return r;
}

}  // namespace tidal
