#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "tidal/config.h"
#include "tidal/scheduler.h"

namespace tidal {

// Everything needed to regenerate the data, the motion net and the four
// controller policies from scratch.
struct PipelineConfig {
  std::uint64_t seed = 7;
  EnvConfig env{};  // tier is overridden per dataset
  OracleConfig oracle{};
  int dynamic_episodes = 2000;  // easy tier
  int static_episodes = 500;
  ChunkingConfig chunking{};
  int action_pad = 15;  // edge padding past the final action, < H
  MotionArch motion_arch{};
  MotionTrainConfig motion_train{};
  PolicyArch policy_arch{};
  PolicyTrainConfig tidal_train{};     // K stages, biased t, weighted horizon
  PolicyTrainConfig baseline_train{};  // synchronous, uniform t, flat weights
  LatencyModel latency{};
  int eval_episodes = 200;
  std::uint64_t eval_seed = 1001;
  int solver_steps = 4;
  std::vector<double> sweep_w{1.0, 1.5, 2.0, 2.5, 3.0};
  std::vector<double> sweep_alpha{3.0, 5.0, 7.0};
  double sweep_budget = 0.2;  // fraction of tidal_train.steps per sweep cell
  std::vector<int> lifespans{28, 36, 44, 56, 64, 80, 100};

  PipelineConfig();
  std::string Canonical() const;
  std::uint64_t Hash() const;
};

Json ToJson(const PipelineConfig& c);
PipelineConfig PipelineConfigFromJson(const Json& j, PipelineConfig base = {});
PipelineConfig LoadPipelineConfig(const std::filesystem::path& path);

// The four learned controllers, in the order of the ablation table.
const std::vector<ControllerKind>& LearnedKinds();

struct TrainedPolicy {
  PolicyNets nets;
  std::uint64_t checkpoint_hash = 0;  // FNV-1a of the serialized bundle
  std::vector<double> loss_curve;
};

struct Pipeline {
  PipelineConfig config;
  std::vector<Episode> dynamic_episodes;
  std::vector<Episode> static_episodes;
  MotionNet motion;
  std::uint64_t motion_hash = 0;
  std::vector<double> motion_curve;
  std::map<ControllerKind, TrainedPolicy> policies;

  ControllerNets Nets(ControllerKind kind) const;
  std::uint64_t CheckpointHash(ControllerKind kind) const;
};

std::vector<Episode> GenerateTierData(const PipelineConfig& cfg, Tier tier, int n);
PolicyTrainConfig TrainConfigFor(const PipelineConfig& cfg, ControllerKind kind);
TrainedPolicy TrainController(const PipelineConfig& cfg, const TrainingSet& data,
                              const MotionNet& motion, ControllerKind kind,
                              const PolicyTrainConfig& train);

using LogFn = std::function<void(const std::string&)>;

// Runs (or reloads) every stage. With a non-empty cache_dir, each artifact
// is stored there under the pipeline hash and reused when present.
Pipeline RunPipeline(const PipelineConfig& cfg, const std::filesystem::path& cache_dir,
                     const LogFn& log = {});
// Regenerates the data but only reloads networks; a missing artifact is a
// ConfigError.
Pipeline LoadPipeline(const PipelineConfig& cfg, const std::filesystem::path& cache_dir);
std::filesystem::path PipelineDir(const PipelineConfig& cfg, const std::filesystem::path& cache_dir);

struct ExperimentSpec {
  std::string name = "eval";
  std::vector<ControllerKind> modes{ControllerKind::kTidal, ControllerKind::kBaseline};
  std::vector<Tier> tiers{Tier::kEasy};
  int n_episodes = 200;
  std::uint64_t seed = 1001;
  LatencyModel latency{};
  std::vector<double> sweep_w;
  std::vector<double> sweep_alpha;
  std::vector<int> lifespans;
  std::filesystem::path output;

  void Validate() const;
};

ExperimentSpec DefaultSpec(const PipelineConfig& cfg, const std::string& name);

struct ResultRow {
  std::string key;
  ControllerKind mode = ControllerKind::kTidal;
  Tier tier = Tier::kEasy;
  Protocol protocol = Protocol::kPaused;
  std::string axis;  // "", "w", "alpha" or "l"
  double axis_value = 0.0;
  int episodes = 0;
  int successes = 0;
  double success_rate = 0.0;
  double halfwidth = 0.0;  // 95% Wilson
  double mean_length = 0.0;
  double effective_hz = 0.0;
  double retention = 1.0;
  std::uint64_t config_hash = 0;
};

class ResultsTable {
 public:
  explicit ResultsTable(std::string name = "") : name_(std::move(name)) {}

  const std::string& name() const { return name_; }
  const std::vector<ResultRow>& rows() const { return rows_; }
  std::vector<ResultRow>& mutable_rows() { return rows_; }
  const std::vector<std::string>& notes() const { return notes_; }

  void Add(ResultRow row);
  void Note(std::string note) { notes_.push_back(std::move(note)); }
  const ResultRow& Find(const std::string& key) const;

  void WriteText(std::ostream& out) const;
  // Tab-separated records with a header line.
  void WriteRecords(std::ostream& out) const;

 private:
  std::string name_;
  std::vector<ResultRow> rows_;
  std::vector<std::string> notes_;
};

double WilsonHalfwidth(int successes, int n, double z = 1.959963984540054);
// Spearman rank correlation with average ranks for ties.
double SpearmanRho(const std::vector<double>& x, const std::vector<double>& y);

std::uint64_t EpisodeSeed(std::uint64_t base, int index);

struct CellStats {
  int episodes = 0;
  int successes = 0;
  double mean_length = 0.0;
  double effective_hz = 0.0;
};

// Runs n paired episodes (seeds EpisodeSeed(seed, i)).
CellStats RunCell(const EnvConfig& env, const ControllerNets& nets, const ControllerMode& mode,
                  int n, std::uint64_t seed);

ControllerMode ModeFor(const PipelineConfig& cfg, ControllerKind kind, const LatencyModel& latency);

ResultsTable EvalSuccessRate(const Pipeline& p, const ExperimentSpec& spec);
ResultsTable AblationSuite(const Pipeline& p, const ExperimentSpec& spec);
ResultsTable PausedVsNonpaused(const Pipeline& p, const ExperimentSpec& spec);
// Retrains the tidal controller per cell at sweep_budget of the main step count.
ResultsTable HyperparamSweep(const Pipeline& p, const ExperimentSpec& spec, const LogFn& log = {});
ResultsTable LifespanSweep(const Pipeline& p, const ExperimentSpec& spec);

void WriteResults(const ResultsTable& table, const std::filesystem::path& path);

}  // namespace tidal
