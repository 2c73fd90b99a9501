#include "tidal/oracle.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tidal/config.h"
#include "tidal/errors.h"

namespace tidal {

namespace {

Vec2 StepToward(const Vec2& from, const Vec2& to, double max_step) {
  const Vec2 d = to - from;
  const double n = d.norm();
  if (n == 0.0) return Vec2::Zero();
  return d * (std::min(n, max_step) / n);
}

std::string EpisodeFileName(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "episode_%05zu.txt", i);
  return buf;
}

}  // namespace

Action OracleAction(const WorldState& state, const EnvConfig& cfg, const OracleConfig& oracle) {
  Action a;
  if (!state.held) {
    const double dist = (state.target_pos - state.ee_pos).norm();
    const double lead_time = dist / cfg.robot_max_speed;
    const Vec2 lead = state.target_pos + state.target_vel * lead_time;
    const Vec2 move = StepToward(state.ee_pos, lead, cfg.max_step());
    a.dx = move.x();
    a.dy = move.y();
    a.grip = dist <= oracle.close_fraction * cfg.grasp_radius ? 1.0 : -1.0;
  } else {
    const Vec2 aim = cfg.goal_center - state.grasp_offset;
    const Vec2 move = StepToward(state.ee_pos, aim, cfg.max_step());
    a.dx = move.x();
    a.dy = move.y();
    const double to_goal = (state.target_pos - cfg.goal_center).norm();
    a.grip = to_goal <= oracle.release_fraction * cfg.goal_radius ? -1.0 : 1.0;
  }
  return ClipAction(a, cfg);
}

Episode RunOracleEpisode(const EnvConfig& cfg, std::uint64_t seed, const OracleConfig& oracle) {
  Episode ep;
  ep.config = cfg;
  ep.seed = seed;
  SeededRng rng(seed);
  WorldState s = EnvReset(cfg, rng);
  ep.states.push_back(s);
  while (!s.terminal()) {
    const Action a = OracleAction(s, cfg, oracle);
    ep.actions.push_back(a);
    s = EnvStep(s, a, cfg, rng);
    ep.states.push_back(s);
  }
  return ep;
}

std::vector<Episode> GenerateDataset(const EnvConfig& cfg, int n_episodes, SeededRng& rng,
                                     int min_length, const OracleConfig& oracle) {
  if (n_episodes <= 0) throw GenerationError("generate_dataset: n_episodes must be positive");
  std::vector<Episode> out;
  out.reserve(static_cast<std::size_t>(n_episodes));
  const long budget = 10L * n_episodes;
  long attempts = 0;
  const std::uint64_t base = DeriveSeed(rng.seed(), static_cast<std::uint64_t>(rng.UniformInt(1 << 30)));
  while (static_cast<int>(out.size()) < n_episodes) {
    if (attempts >= budget) {
      throw GenerationError("generate_dataset: resample budget exhausted after " +
                            std::to_string(attempts) + " attempts (" +
                            std::to_string(out.size()) + " kept)");
    }
    ++attempts;
    const std::uint64_t seed = DeriveSeed(base, static_cast<std::uint64_t>(attempts));
    Episode ep = RunOracleEpisode(cfg, seed, oracle);
    if (ep.success() && ep.length() >= min_length) out.push_back(std::move(ep));
  }
  return out;
}

void SaveDataset(const std::filesystem::path& dir, const std::vector<Episode>& episodes,
                 std::uint64_t seed) {
  if (episodes.empty()) throw GenerationError("save_dataset: no episodes");
  std::filesystem::create_directories(dir);
  const EnvConfig& cfg = episodes.front().config;
  Json manifest;
  manifest["format"] = "tidal-dataset";
  manifest["version"] = 1;
  manifest["episode_count"] = episodes.size();
  manifest["seed"] = seed;
  manifest["config_hash"] = Fnv1a(cfg.Canonical());
  manifest["env"] = ToJson(cfg);
  std::ofstream mf(dir / "manifest.json");
  mf << manifest.dump(2) << '\n';
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const Episode& ep = episodes[i];
    std::ofstream f(dir / EpisodeFileName(i));
    f << "# seed " << ep.seed << " tier " << TierName(ep.config.tier) << '\n';
    for (std::size_t t = 0; t < ep.states.size(); ++t) {
      const Action a = t < ep.actions.size() ? ep.actions[t] : Action{0.0, 0.0, 0.0};
      WriteTraceLine(f, ep.states[t], a);
    }
    if (!f) throw GenerationError("save_dataset: write failed for " + EpisodeFileName(i));
  }
}

DatasetManifest ReadManifest(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw ConfigError("dataset: missing manifest in " + dir.string());
  const Json j = Json::parse(mf);
  DatasetManifest m;
  m.episode_count = j.at("episode_count").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config_hash = j.at("config_hash").get<std::uint64_t>();
  m.config = j.at("env").dump();
  return m;
}

std::vector<Episode> LoadDataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw ConfigError("dataset: missing manifest in " + dir.string());
  const Json j = Json::parse(mf);
  const EnvConfig cfg = EnvConfigFromJson(j.at("env"));
  const int count = j.at("episode_count").get<int>();
  std::vector<Episode> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    std::ifstream f(dir / EpisodeFileName(static_cast<std::size_t>(i)));
    if (!f) throw ConfigError("dataset: missing " + EpisodeFileName(static_cast<std::size_t>(i)));
    Episode ep;
    ep.config = cfg;
    std::string line;
    std::getline(f, line);
    {
      std::istringstream hs(line);
      std::string hash_mark, seed_tag, tier_tag, tier;
      hs >> hash_mark >> seed_tag >> ep.seed >> tier_tag >> tier;
      if (hash_mark != "#" || seed_tag != "seed") throw ConfigError("dataset: bad episode header");
      ep.config.tier = ParseTier(tier);
    }
    std::vector<TraceLine> lines;
    while (std::getline(f, line)) {
      if (!line.empty()) lines.push_back(ParseTraceLine(line));
    }
    for (std::size_t t = 0; t < lines.size(); ++t) {
      ep.states.push_back(lines[t].state);
      if (t + 1 < lines.size()) ep.actions.push_back(lines[t].action);
    }
    out.push_back(std::move(ep));
  }
  return out;
}

}  // namespace tidal
