#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tidal/linalg.h"
#include "tidal/rng.h"

namespace tidal {

enum class Tier { kEasy, kHard, kStatic };
enum class Phase { kApproach, kCarry, kDone, kFailed };
enum class RasterMode { kNearest, kBilinear };

std::string TierName(Tier t);
Tier ParseTier(const std::string& name);
std::string PhaseName(Phase p);
std::string RasterModeName(RasterMode m);
RasterMode ParseRasterMode(const std::string& name);

// 2D interception world on the unit square. Lengths are workspace units,
// speeds are units per second.
struct EnvConfig {
  double dt = 0.02;
  double target_speed_min = 0.04;
  double target_speed_max = 0.06;
  bool turn_at_boundary = true;
  // A target within this distance of a wall, moving toward it, turns.
  double boundary_margin = 0.005;
  double robot_max_speed = 0.15;
  double grasp_radius = 0.03;
  Vec2 goal_center{0.5, 0.5};
  double goal_radius = 0.05;
  int max_steps = 600;
  Tier tier = Tier::kEasy;
  Vec2 ee_start{0.5, 0.1};
  double spawn_min = 0.2;
  double spawn_max = 0.8;
  // Closing the gripper on empty space knocks the target away and ends the
  // episode.
  bool missed_grasp_fails = true;
  int grid_resolution = 16;
  RasterMode raster = RasterMode::kNearest;

  // Largest displacement a single step may command.
  double max_step() const { return robot_max_speed * dt; }
  void Validate() const;
  std::string Canonical() const;
};

struct WorldState {
  int time_step = 0;
  Vec2 ee_pos{0.5, 0.1};
  bool gripper_closed = false;
  Vec2 target_pos{0.5, 0.5};
  // Free-flight velocity; kept while held so a dropped target resumes it.
  Vec2 target_vel{0.0, 0.0};
  bool held = false;
  Vec2 grasp_offset{0.0, 0.0};  // target_pos - ee_pos, captured at grasp time
  Phase phase = Phase::kApproach;

  bool terminal() const { return phase == Phase::kDone || phase == Phase::kFailed; }
};

struct Action {
  double dx = 0.0;
  double dy = 0.0;
  double grip = -1.0;  // > 0 closes
};

// Clips the displacement to the speed limit and grip to [-1, 1].
Action ClipAction(const Action& a, const EnvConfig& cfg);

// Single-channel G x G grid; marker intensities are summed.
struct GridObs {
  static constexpr double kTargetIntensity = 1.0;
  static constexpr double kEffectorIntensity = 0.6;
  static constexpr double kGoalIntensity = 0.3;
  static constexpr double kMaxIntensity = kTargetIntensity + kEffectorIntensity + kGoalIntensity;

  int resolution = 0;
  std::vector<double> cells;  // index iy * resolution + ix

  static GridObs Zeros(int resolution);
  double at(int ix, int iy) const { return cells[static_cast<std::size_t>(iy * resolution + ix)]; }
};

WorldState EnvReset(const EnvConfig& cfg, SeededRng& rng);
WorldState EnvStep(const WorldState& state, const Action& action, const EnvConfig& cfg,
                   SeededRng& rng);
// Lets n control steps of world time pass with the robot holding position
// and gripper. Stops early if the episode ends.
WorldState EnvAdvanceFree(const WorldState& state, const EnvConfig& cfg, SeededRng& rng, int n);
GridObs Rasterize(const WorldState& state, const EnvConfig& cfg);
int ContactState(const WorldState& state);

// Proprioceptive vector [ee_x, ee_y, gripper_closed, held].
std::array<double, 4> Proprio(const WorldState& state);

// One line per step: "time_step ee_x ee_y gripper target_x target_y vel_x vel_y held phase
// dx dy grip contact".
struct TraceLine {
  WorldState state;
  Action action;
};
void WriteTraceLine(std::ostream& out, const WorldState& state, const Action& action);
TraceLine ParseTraceLine(const std::string& line);

}  // namespace tidal
