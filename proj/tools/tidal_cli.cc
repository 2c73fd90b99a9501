// Command-line front end: data generation, training and the experiment suite.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tidal/errors.h"
#include "tidal/harness.h"
#include "tidal/oracle.h"

namespace fs = std::filesystem;
using namespace tidal;

namespace {

struct Common {
  std::string config;
  std::string cache = "tidal_cache";
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool quiet = false;

  void Attach(CLI::App* app) {
    app->add_option("--config", config, "JSON config file (defaults apply to missing keys)");
    app->add_option("--cache", cache, "artifact cache directory");
    app->add_option("--out", out, "output path");
    app->add_option("--seed", seed, "override the config seed")->each([this](const std::string&) {
      seed_set = true;
    });
    app->add_flag("--quiet", quiet, "suppress progress on stderr");
  }

  PipelineConfig Load() const {
    PipelineConfig cfg = config.empty() ? PipelineConfig{} : LoadPipelineConfig(config);
    if (seed_set) cfg.seed = seed;
    return cfg;
  }

  LogFn Log() const {
    if (quiet) return {};
    return [](const std::string& s) { std::cerr << "[tidal] " << s << '\n'; };
  }
};

struct EvalOptions {
  std::vector<std::string> modes;
  std::vector<std::string> tiers;
  std::string protocol;
  int episodes = 0;
  std::uint64_t eval_seed = 0;
  bool eval_seed_set = false;

  void Attach(CLI::App* app, bool with_modes) {
    if (with_modes) {
      app->add_option("--mode", modes, "controller: tidal, baseline, baseline_plus_motion, tidal_no_motion, oracle");
      app->add_option("--tier", tiers, "task tier: easy, hard, static");
    }
    app->add_option("--protocol", protocol, "paused or nonpaused");
    app->add_option("--episodes", episodes, "episodes per cell")->check(CLI::PositiveNumber);
    app->add_option("--eval-seed", eval_seed, "base seed of the paired episode set")
        ->each([this](const std::string&) { eval_seed_set = true; });
  }

  ExperimentSpec Spec(const PipelineConfig& cfg, const std::string& name) const {
    ExperimentSpec s = DefaultSpec(cfg, name);
    if (!modes.empty()) {
      s.modes.clear();
      for (const auto& m : modes) s.modes.push_back(ParseControllerKind(m));
    }
    if (!tiers.empty()) {
      s.tiers.clear();
      for (const auto& t : tiers) s.tiers.push_back(ParseTier(t));
    }
    if (!protocol.empty()) s.latency.protocol = ParseProtocol(protocol);
    if (episodes > 0) s.n_episodes = episodes;
    if (eval_seed_set) s.seed = eval_seed;
    return s;
  }
};

void Emit(const ResultsTable& table, const std::string& out) {
  table.WriteText(std::cout);
  if (!out.empty()) {
    WriteResults(table, out);
    std::cout << "records written to " << out << '\n';
  }
}

std::vector<Episode> LoadAll(const std::vector<std::string>& dirs) {
  std::vector<Episode> all;
  for (const auto& d : dirs) {
    auto eps = LoadDataset(d);
    all.insert(all.end(), std::make_move_iterator(eps.begin()), std::make_move_iterator(eps.end()));
  }
  return all;
}

// Exit code 2 for usage errors, 3 for a failed acceptance gate, 1 otherwise.
int Run(int argc, char** argv) {
  CLI::App app{"tidal: desk-scale dual-frequency flow-matching controller"};
  app.require_subcommand(1);
  Common common;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate an oracle dataset directory");
  common.Attach(gen);
  std::string gen_tier = "easy";
  int gen_n = 200;
  gen->add_option("--tier", gen_tier, "easy, hard or static");
  gen->add_option("--n", gen_n, "episode count")->check(CLI::PositiveNumber);

  // train-motion
  auto* tm = app.add_subcommand("train-motion", "train the motion predictor on dataset directories");
  common.Attach(tm);
  std::vector<std::string> tm_data;
  tm->add_option("--data", tm_data, "dataset directories")->required();

  // train-policy
  auto* tp = app.add_subcommand("train-policy", "train one controller policy");
  common.Attach(tp);
  std::vector<std::string> tp_data;
  std::string tp_motion, tp_mode = "tidal";
  int tp_steps = 0;
  tp->add_option("--data", tp_data, "dataset directories")->required();
  tp->add_option("--motion", tp_motion, "motion net file")->required();
  tp->add_option("--mode", tp_mode, "tidal, baseline, baseline_plus_motion or tidal_no_motion");
  tp->add_option("--steps", tp_steps, "override the step count")->check(CLI::PositiveNumber);

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "build (or reuse) every cached artifact");
  common.Attach(pipe);
  bool fresh = false;
  pipe->add_flag("--fresh", fresh, "discard cached artifacts for this config first");

  // eval
  auto* ev = app.add_subcommand("eval", "success rate per controller and tier");
  common.Attach(ev);
  EvalOptions ev_opts;
  ev_opts.Attach(ev, true);
  bool check = false;
  double gate_ratio = 1.5;
  std::string trace_dir;
  ev->add_flag("--check", check, "fail unless tidal >= ratio x baseline on every tier");
  ev->add_option("--ratio", gate_ratio, "acceptance ratio for --check");
  ev->add_option("--trace", trace_dir, "write the first episode's event trace per cell here");

  auto* ab = app.add_subcommand("ablate", "four learned controllers on paired easy episodes");
  common.Attach(ab);
  EvalOptions ab_opts;
  ab_opts.Attach(ab, false);

  auto* sw = app.add_subcommand("sweep", "retrain per horizon weight and alpha cell");
  common.Attach(sw);
  EvalOptions sw_opts;
  sw_opts.Attach(sw, false);

  auto* ls = app.add_subcommand("lifespan", "tidal success over intent lifespans");
  common.Attach(ls);
  EvalOptions ls_opts;
  ls_opts.Attach(ls, false);
  std::vector<int> lifespans;
  ls->add_option("--l", lifespans, "lifespan grid");

  auto* pc = app.add_subcommand("protocol-compare", "paused vs nonpaused success and retention");
  common.Attach(pc);
  EvalOptions pc_opts;
  pc_opts.Attach(pc, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  const PipelineConfig cfg = common.Load();
  const LogFn log = common.Log();

  if (gen->parsed()) {
    if (common.out.empty()) throw UsageError("gen-data: --out DIR is required");
    EnvConfig env = cfg.env;
    env.tier = ParseTier(gen_tier);
    const std::uint64_t seed = common.seed_set ? common.seed : cfg.seed;
    SeededRng rng(seed);
    const auto eps = GenerateDataset(env, gen_n, rng, cfg.chunking.segment_length(), cfg.oracle);
    SaveDataset(common.out, eps, seed);
    std::cout << "wrote " << eps.size() << " episodes to " << common.out << '\n';
    return 0;
  }
  if (tm->parsed()) {
    if (common.out.empty()) throw UsageError("train-motion: --out FILE is required");
    const auto eps = LoadAll(tm_data);
    SeededRng rng(DeriveSeed(cfg.seed, 0x307));
    MotionNet net = MakeMotionNet(cfg.motion_arch, cfg.env.grid_resolution, rng);
    const auto curve = TrainMotion(eps, net, cfg.motion_train, rng).epoch_loss;
    std::ofstream out(common.out);
    WriteMotionNet(out, net);
    for (std::size_t i = 0; i < curve.size(); ++i) std::cout << "epoch " << i + 1 << " loss " << curve[i] << '\n';
    std::cout << "motion net checksum " << net.Checksum() << '\n';
    return 0;
  }
  if (tp->parsed()) {
    if (common.out.empty()) throw UsageError("train-policy: --out FILE is required");
    const ControllerKind kind = ParseControllerKind(tp_mode);
    std::ifstream min(tp_motion);
    if (!min) throw UsageError("train-policy: cannot open " + tp_motion);
    const MotionNet motion = ReadMotionNet(min);
    const TrainingSet data(LoadAll(tp_data), &motion, cfg.chunking, cfg.action_pad);
    PolicyTrainConfig train = TrainConfigFor(cfg, kind);
    if (tp_steps > 0) train.steps = tp_steps;
    const TrainedPolicy policy = TrainController(cfg, data, motion, kind, train);
    std::ofstream out(common.out);
    WritePolicy(out, policy.nets, Fnv1a(train.Canonical()));
    for (std::size_t i = 0; i < policy.loss_curve.size(); ++i) {
      std::cout << "log " << i << " loss " << policy.loss_curve[i] << '\n';
    }
    return 0;
  }
  if (pipe->parsed()) {
    const fs::path dir = PipelineDir(cfg, common.cache);
    if (fresh) fs::remove_all(dir);
    const Pipeline p = RunPipeline(cfg, common.cache, log);
    std::cout << "artifacts: " << dir.string() << '\n';
    std::cout << "motion hash " << std::hex << p.motion_hash << '\n';
    for (ControllerKind k : LearnedKinds()) {
      std::cout << ControllerKindName(k) << " hash " << p.CheckpointHash(k) << '\n';
    }
    std::cout << std::dec;
    return 0;
  }

  const Pipeline p = RunPipeline(cfg, common.cache, log);
  if (ev->parsed()) {
    const ExperimentSpec spec = ev_opts.Spec(cfg, "eval");
    const ResultsTable t = EvalSuccessRate(p, spec);
    Emit(t, common.out);
    if (!trace_dir.empty()) {
      fs::create_directories(trace_dir);
      for (Tier tier : spec.tiers) {
        EnvConfig env = cfg.env;
        env.tier = tier;
        for (ControllerKind kind : spec.modes) {
          const RolloutResult r =
              RunRollout(env, p.Nets(kind), ModeFor(cfg, kind, spec.latency), EpisodeSeed(spec.seed, 0));
          std::ofstream out(fs::path(trace_dir) / (ControllerKindName(kind) + "_" + TierName(tier) + "_" +
                                                   ProtocolName(spec.latency.protocol) + ".trace"));
          WriteTrace(out, r.trace);
        }
      }
    }
    if (check) {
      bool ok = true;
      for (Tier tier : spec.tiers) {
        const std::string suffix = "/" + TierName(tier) + "/" + ProtocolName(spec.latency.protocol);
        const double tidal = t.Find("tidal" + suffix).success_rate;
        const double base = t.Find("baseline" + suffix).success_rate;
        const bool pass = tidal >= gate_ratio * base && tidal > 0.0;
        std::cout << (pass ? "PASS" : "FAIL") << " gate " << TierName(tier) << ": tidal " << tidal
                  << " vs " << gate_ratio << " x baseline " << base << '\n';
        ok = ok && pass;
      }
      if (!ok) return 3;
    }
    return 0;
  }
  if (ab->parsed()) {
    Emit(AblationSuite(p, ab_opts.Spec(cfg, "ablation")), common.out);
    return 0;
  }
  if (sw->parsed()) {
    Emit(HyperparamSweep(p, sw_opts.Spec(cfg, "sweep"), log), common.out);
    return 0;
  }
  if (ls->parsed()) {
    ExperimentSpec spec = ls_opts.Spec(cfg, "lifespan");
    if (!lifespans.empty()) spec.lifespans = lifespans;
    Emit(LifespanSweep(p, spec), common.out);
    return 0;
  }
  if (pc->parsed()) {
    Emit(PausedVsNonpaused(p, pc_opts.Spec(cfg, "protocol")), common.out);
    return 0;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return Run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
