#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tidal/env.h"

namespace tidal {

// Latency-free lead-pursuit expert.
struct OracleConfig {
  // Close once the target is this fraction of grasp_radius away.
  double close_fraction = 0.5;
  // Open once the carried target is this fraction of goal_radius from the goal center.
  double release_fraction = 0.5;
};

// A rollout recorded step by step. states[t] is the world observed before
// actions[t] is applied; states has one more entry than actions.
struct Episode {
  EnvConfig config;
  std::uint64_t seed = 0;
  std::vector<WorldState> states;
  std::vector<Action> actions;

  int length() const { return static_cast<int>(actions.size()); }
  bool success() const { return !states.empty() && states.back().phase == Phase::kDone; }
  GridObs Grid(int t) const { return Rasterize(states[static_cast<std::size_t>(t)], config); }
  int Contact(int t) const { return ContactState(states[static_cast<std::size_t>(t)]); }
};

Action OracleAction(const WorldState& state, const EnvConfig& cfg, const OracleConfig& oracle = {});

// Runs the oracle from a reset drawn with `seed` until the episode ends.
Episode RunOracleEpisode(const EnvConfig& cfg, std::uint64_t seed, const OracleConfig& oracle = {});

// Exactly n successful episodes, each at least min_length steps long.
// Failed or short rollouts are discarded; more than 10 * n attempts is an error.
std::vector<Episode> GenerateDataset(const EnvConfig& cfg, int n_episodes, SeededRng& rng,
                                     int min_length = 28, const OracleConfig& oracle = {});

struct DatasetManifest {
  int episode_count = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::string config;
};

// Directory layout: manifest.json plus episode_NNNNN.txt, each holding one
// trace line per recorded state (the final state carries a zero action).
void SaveDataset(const std::filesystem::path& dir, const std::vector<Episode>& episodes,
                 std::uint64_t seed);
std::vector<Episode> LoadDataset(const std::filesystem::path& dir);
DatasetManifest ReadManifest(const std::filesystem::path& dir);

}  // namespace tidal
