#include "tidal/harness.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "tidal/errors.h"

namespace tidal {

PipelineConfig::PipelineConfig() {
  env.raster = RasterMode::kBilinear;
  env.grasp_radius = 0.05;
  env.goal_radius = 0.1;
  motion_arch.hidden = 128;
  motion_arch.embedding_dim = 16;
  motion_arch.activation = Activation::kRelu;
  motion_train.epochs = 40;
  motion_train.batches_per_epoch = 500;
  motion_train.adam.learning_rate = 3e-3;
  policy_arch.activation = Activation::kRelu;
  for (PolicyTrainConfig* t : {&tidal_train, &baseline_train}) {
    t->steps = 20000;
    t->adam.learning_rate = 3e-3;
    t->final_lr_fraction = 0.05;
  }
  baseline_train.alpha = 1.0;
  baseline_train.first_weight = 1.0;
  baseline_train.stages = 1;
}

Json ToJson(const PipelineConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["env"] = ToJson(c.env);
  j["oracle"] = ToJson(c.oracle);
  j["dynamic_episodes"] = c.dynamic_episodes;
  j["static_episodes"] = c.static_episodes;
  j["chunking"] = ToJson(c.chunking);
  j["action_pad"] = c.action_pad;
  j["motion_arch"] = ToJson(c.motion_arch);
  j["motion_train"] = ToJson(c.motion_train);
  j["policy_arch"] = ToJson(c.policy_arch);
  j["tidal_train"] = ToJson(c.tidal_train);
  j["baseline_train"] = ToJson(c.baseline_train);
  j["latency"] = ToJson(c.latency);
  j["eval_episodes"] = c.eval_episodes;
  j["eval_seed"] = c.eval_seed;
  j["solver_steps"] = c.solver_steps;
  j["sweep_w"] = c.sweep_w;
  j["sweep_alpha"] = c.sweep_alpha;
  j["sweep_budget"] = c.sweep_budget;
  j["lifespans"] = c.lifespans;
  return j;
}

PipelineConfig PipelineConfigFromJson(const Json& j, PipelineConfig c) {
  if (!j.is_object()) throw UsageError("config: expected a JSON object");
  static const std::set<std::string> known{
      "seed",          "env",          "oracle",      "dynamic_episodes", "static_episodes",
      "chunking",      "action_pad",   "motion_arch",  "motion_train", "policy_arch",     "tidal_train",
      "baseline_train", "latency",     "eval_episodes", "eval_seed",      "solver_steps",
      "sweep_w",       "sweep_alpha",  "sweep_budget", "lifespans"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw UsageError("config: unknown key '" + key + "'");
  }
  try {
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("env")) c.env = EnvConfigFromJson(j["env"], c.env);
    if (j.contains("oracle")) c.oracle = OracleConfigFromJson(j["oracle"], c.oracle);
    if (j.contains("dynamic_episodes")) c.dynamic_episodes = j["dynamic_episodes"].get<int>();
    if (j.contains("static_episodes")) c.static_episodes = j["static_episodes"].get<int>();
    if (j.contains("chunking")) c.chunking = ChunkingConfigFromJson(j["chunking"], c.chunking);
    if (j.contains("action_pad")) c.action_pad = j["action_pad"].get<int>();
    if (j.contains("motion_arch")) c.motion_arch = MotionArchFromJson(j["motion_arch"], c.motion_arch);
    if (j.contains("motion_train")) {
      c.motion_train = MotionTrainConfigFromJson(j["motion_train"], c.motion_train);
    }
    if (j.contains("policy_arch")) c.policy_arch = PolicyArchFromJson(j["policy_arch"], c.policy_arch);
    if (j.contains("tidal_train")) {
      c.tidal_train = PolicyTrainConfigFromJson(j["tidal_train"], c.tidal_train);
    }
    if (j.contains("baseline_train")) {
      c.baseline_train = PolicyTrainConfigFromJson(j["baseline_train"], c.baseline_train);
    }
    if (j.contains("latency")) c.latency = LatencyModelFromJson(j["latency"], c.latency);
    if (j.contains("eval_episodes")) c.eval_episodes = j["eval_episodes"].get<int>();
    if (j.contains("eval_seed")) c.eval_seed = j["eval_seed"].get<std::uint64_t>();
    if (j.contains("solver_steps")) c.solver_steps = j["solver_steps"].get<int>();
    if (j.contains("sweep_w")) c.sweep_w = j["sweep_w"].get<std::vector<double>>();
    if (j.contains("sweep_alpha")) c.sweep_alpha = j["sweep_alpha"].get<std::vector<double>>();
    if (j.contains("sweep_budget")) c.sweep_budget = j["sweep_budget"].get<double>();
    if (j.contains("lifespans")) c.lifespans = j["lifespans"].get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  } catch (const ConfigError& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  if (c.dynamic_episodes < 1) throw UsageError("config: dynamic_episodes must be >= 1");
  if (c.static_episodes < 0) throw UsageError("config: static_episodes must be >= 0");
  if (c.eval_episodes < 1) throw UsageError("config: eval_episodes must be >= 1");
  if (c.action_pad < 0 || c.action_pad >= c.chunking.horizon) {
    throw UsageError("config: action_pad must be in [0, H)");
  }
  return c;
}

PipelineConfig LoadPipelineConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config: cannot open " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config: " + path.string() + ": " + e.what());
  }
  return PipelineConfigFromJson(j);
}

// Only the fields that shape the trained artifacts.
std::string PipelineConfig::Canonical() const {
  Json j = ToJson(*this);
  for (const char* key : {"latency", "eval_episodes", "eval_seed", "solver_steps", "sweep_w",
                          "sweep_alpha", "sweep_budget", "lifespans"}) {
    j.erase(key);
  }
  return j.dump();
}

std::uint64_t PipelineConfig::Hash() const { return Fnv1a(Canonical()); }

const std::vector<ControllerKind>& LearnedKinds() {
  static const std::vector<ControllerKind> kinds{ControllerKind::kBaseline,
                                                 ControllerKind::kTidalNoMotion,
                                                 ControllerKind::kBaselinePlusMotion,
                                                 ControllerKind::kTidal};
  return kinds;
}

ControllerNets Pipeline::Nets(ControllerKind kind) const {
  ControllerNets nets;
  nets.motion = &motion;
  if (kind == ControllerKind::kOracle) return nets;
  auto it = policies.find(kind);
  if (it == policies.end()) {
    throw ConfigError("no trained checkpoint for controller '" + ControllerKindName(kind) + "'");
  }
  nets.policy = &it->second.nets;
  return nets;
}

std::uint64_t Pipeline::CheckpointHash(ControllerKind kind) const {
  if (kind == ControllerKind::kOracle) return Fnv1a(config.env.Canonical());
  auto it = policies.find(kind);
  if (it == policies.end()) {
    throw ConfigError("no trained checkpoint for controller '" + ControllerKindName(kind) + "'");
  }
  return it->second.checkpoint_hash ^ motion_hash;
}

std::vector<Episode> GenerateTierData(const PipelineConfig& cfg, Tier tier, int n) {
  EnvConfig env = cfg.env;
  env.tier = tier;
  SeededRng rng(DeriveSeed(cfg.seed, 0xda7a, static_cast<std::uint64_t>(tier)));
  return GenerateDataset(env, n, rng, cfg.chunking.segment_length(), cfg.oracle);
}

PolicyTrainConfig TrainConfigFor(const PipelineConfig& cfg, ControllerKind kind) {
  if (kind == ControllerKind::kOracle) throw ConfigError("the oracle has no policy to train");
  return IsTidal(kind) ? cfg.tidal_train : cfg.baseline_train;
}

namespace {

std::string PolicyText(const PolicyNets& nets, std::uint64_t train_hash) {
  std::ostringstream os;
  WritePolicy(os, nets, train_hash);
  return os.str();
}

std::string MotionText(const MotionNet& net) {
  std::ostringstream os;
  WriteMotionNet(os, net);
  return os.str();
}

void WriteFile(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw ConfigError("cannot write " + path.string());
}

bool ReadFile(const std::filesystem::path& path, std::string* text) {
  std::ifstream in(path);
  if (!in) return false;
  std::ostringstream os;
  os << in.rdbuf();
  *text = os.str();
  return true;
}

std::vector<double> ReadCurve(const std::filesystem::path& path) {
  std::vector<double> out;
  std::ifstream in(path);
  std::string tok;
  while (in >> tok) out.push_back(std::strtod(tok.c_str(), nullptr));
  return out;
}

void WriteCurve(const std::filesystem::path& path, const std::vector<double>& curve) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (double v : curve) os << v << '\n';
  WriteFile(path, os.str());
}

std::string HexHash(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace

TrainedPolicy TrainController(const PipelineConfig& cfg, const TrainingSet& data,
                              const MotionNet& motion, ControllerKind kind,
                              const PolicyTrainConfig& train) {
  SeededRng init_rng(DeriveSeed(cfg.seed, 0x1a17, static_cast<std::uint64_t>(kind)));
  TrainedPolicy out;
  out.nets = MakePolicyNets(cfg.policy_arch, cfg.chunking, data.grid_cells(), data.fused_dim(),
                            UsesMotion(kind), init_rng);
  SeededRng train_rng(DeriveSeed(cfg.seed, 0x7a1e, static_cast<std::uint64_t>(kind)));
  out.loss_curve = TrainPolicy(data, out.nets, train, train_rng, &motion).loss_curve;
  out.checkpoint_hash = Fnv1a(PolicyText(out.nets, Fnv1a(train.Canonical())));
  return out;
}

std::filesystem::path PipelineDir(const PipelineConfig& cfg, const std::filesystem::path& cache_dir) {
  return cache_dir / HexHash(cfg.Hash());
}

namespace {

Pipeline BuildPipeline(const PipelineConfig& cfg, const std::filesystem::path& cache_dir,
                       bool allow_training, const LogFn& log) {
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  Pipeline p;
  p.config = cfg;
  std::filesystem::path dir;
  if (!cache_dir.empty()) {
    dir = PipelineDir(cfg, cache_dir);
    if (allow_training) {
      std::filesystem::create_directories(dir);
      WriteFile(dir / "config.json", ToJson(cfg).dump(2) + "\n");
    }
  }
  auto require = [&](const std::string& what) {
    if (!allow_training) {
      throw ConfigError("missing checkpoint: " + what + " not found under " +
                        (dir.empty() ? std::string("<no cache>") : dir.string()));
    }
  };

  say("generating oracle data");
  p.dynamic_episodes = GenerateTierData(cfg, Tier::kEasy, cfg.dynamic_episodes);
  if (cfg.static_episodes > 0) {
    p.static_episodes = GenerateTierData(cfg, Tier::kStatic, cfg.static_episodes);
  }
  std::vector<Episode> all = p.dynamic_episodes;
  all.insert(all.end(), p.static_episodes.begin(), p.static_episodes.end());

  std::string text;
  if (!dir.empty() && ReadFile(dir / "motion.txt", &text)) {
    std::istringstream is(text);
    p.motion = ReadMotionNet(is);
    p.motion_curve = ReadCurve(dir / "motion_curve.txt");
    say("motion net loaded from cache");
  } else {
    require("motion.txt");
    say("training motion net");
    SeededRng rng(DeriveSeed(cfg.seed, 0x307));
    p.motion = MakeMotionNet(cfg.motion_arch, cfg.env.grid_resolution, rng);
    p.motion_curve = TrainMotion(all, p.motion, cfg.motion_train, rng).epoch_loss;
    if (!dir.empty()) {
      WriteFile(dir / "motion.txt", MotionText(p.motion));
      WriteCurve(dir / "motion_curve.txt", p.motion_curve);
    }
  }
  p.motion_hash = Fnv1a(MotionText(p.motion));

  const TrainingSet data(all, &p.motion, cfg.chunking, cfg.action_pad);
  for (ControllerKind kind : LearnedKinds()) {
    const std::string name = ControllerKindName(kind);
    const PolicyTrainConfig train = TrainConfigFor(cfg, kind);
    const std::filesystem::path file = dir.empty() ? dir : dir / ("policy_" + name + ".txt");
    if (!dir.empty() && ReadFile(file, &text)) {
      std::istringstream is(text);
      TrainedPolicy tp;
      tp.nets = ReadPolicy(is);
      tp.checkpoint_hash = Fnv1a(text);
      tp.loss_curve = ReadCurve(dir / ("curve_" + name + ".txt"));
      p.policies.emplace(kind, std::move(tp));
      say("policy " + name + " loaded from cache");
      continue;
    }
    require("policy_" + name + ".txt");
    say("training policy " + name);
    TrainedPolicy tp = TrainController(cfg, data, p.motion, kind, train);
    if (!dir.empty()) {
      WriteFile(file, PolicyText(tp.nets, Fnv1a(train.Canonical())));
      WriteCurve(dir / ("curve_" + name + ".txt"), tp.loss_curve);
    }
    p.policies.emplace(kind, std::move(tp));
  }
  return p;
}

}  // namespace

Pipeline RunPipeline(const PipelineConfig& cfg, const std::filesystem::path& cache_dir,
                     const LogFn& log) {
  return BuildPipeline(cfg, cache_dir, true, log);
}

Pipeline LoadPipeline(const PipelineConfig& cfg, const std::filesystem::path& cache_dir) {
  return BuildPipeline(cfg, cache_dir, false, {});
}

void ExperimentSpec::Validate() const {
  if (n_episodes < 1) throw ConfigError("experiment: n_episodes must be >= 1");
  if (modes.empty()) throw ConfigError("experiment: no controller modes");
  latency.Validate();
}

ExperimentSpec DefaultSpec(const PipelineConfig& cfg, const std::string& name) {
  ExperimentSpec s;
  s.name = name;
  s.n_episodes = cfg.eval_episodes;
  s.seed = cfg.eval_seed;
  s.latency = cfg.latency;
  s.sweep_w = cfg.sweep_w;
  s.sweep_alpha = cfg.sweep_alpha;
  s.lifespans = cfg.lifespans;
  return s;
}

void ResultsTable::Add(ResultRow row) {
  for (const auto& r : rows_) {
    if (r.key == row.key) throw AnalysisError("results: duplicate row key '" + row.key + "'");
  }
  rows_.push_back(std::move(row));
}

const ResultRow& ResultsTable::Find(const std::string& key) const {
  for (const auto& r : rows_) {
    if (r.key == key) return r;
  }
  throw AnalysisError("results: no row '" + key + "' in table " + name_);
}

void ResultsTable::WriteText(std::ostream& out) const {
  out << "== " << name_ << " ==\n";
  out << std::left << std::setw(44) << "row" << std::right << std::setw(9) << "success"
      << std::setw(9) << "+/-" << std::setw(10) << "mean_len" << std::setw(9) << "eff_hz"
      << std::setw(11) << "retention" << "  config_hash\n";
  for (const auto& r : rows_) {
    out << std::left << std::setw(44) << r.key << std::right << std::fixed << std::setprecision(3)
        << std::setw(9) << r.success_rate << std::setw(9) << r.halfwidth << std::setprecision(1)
        << std::setw(10) << r.mean_length << std::setprecision(2) << std::setw(9) << r.effective_hz
        << std::setprecision(3) << std::setw(11) << r.retention << "  " << HexHash(r.config_hash)
        << '\n';
  }
  out.unsetf(std::ios::floatfield);
  for (const auto& n : notes_) out << "# " << n << '\n';
}

void ResultsTable::WriteRecords(std::ostream& out) const {
  out << "table\tkey\tmode\ttier\tprotocol\taxis\taxis_value\tepisodes\tsuccesses\tsuccess_rate"
         "\thalfwidth\tmean_length\teffective_hz\tretention\tconfig_hash\n";
  out << std::setprecision(17);
  for (const auto& r : rows_) {
    out << name_ << '\t' << r.key << '\t' << ControllerKindName(r.mode) << '\t' << TierName(r.tier)
        << '\t' << ProtocolName(r.protocol) << '\t' << r.axis << '\t' << r.axis_value << '\t'
        << r.episodes << '\t' << r.successes << '\t' << r.success_rate << '\t' << r.halfwidth
        << '\t' << r.mean_length << '\t' << r.effective_hz << '\t' << r.retention << '\t'
        << HexHash(r.config_hash) << '\n';
  }
}

double WilsonHalfwidth(int successes, int n, double z) {
  if (n <= 0) throw AnalysisError("wilson: n must be positive");
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  return z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / (1.0 + z2 / n);
}

namespace {

std::vector<double> Ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double SpearmanRho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw AnalysisError("spearman: need two equal-length series");
  const std::vector<double> rx = Ranks(x), ry = Ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::uint64_t EpisodeSeed(std::uint64_t base, int index) {
  return DeriveSeed(base, 0xe9150de, static_cast<std::uint64_t>(index));
}

CellStats RunCell(const EnvConfig& env, const ControllerNets& nets, const ControllerMode& mode,
                  int n, std::uint64_t seed) {
  CellStats s;
  s.episodes = n;
  double length_sum = 0.0, hz_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const RolloutResult r = RunRollout(env, nets, mode, EpisodeSeed(seed, i));
    s.successes += r.success ? 1 : 0;
    length_sum += r.steps;
    hz_sum += EffectiveFrequency(r.trace);
  }
  s.mean_length = length_sum / n;
  s.effective_hz = hz_sum / n;
  return s;
}

ControllerMode ModeFor(const PipelineConfig& cfg, ControllerKind kind, const LatencyModel& latency) {
  ControllerMode m;
  m.kind = kind;
  m.chunking = cfg.chunking;
  m.latency = latency;
  m.lifespan = cfg.chunking.segment_length();
  m.solver_steps = cfg.solver_steps;
  return m;
}

namespace {

ResultRow MakeRow(const Pipeline& p, ControllerKind kind, Tier tier, const LatencyModel& latency,
                  int n, std::uint64_t seed, const ControllerMode& mode) {
  EnvConfig env = p.config.env;
  env.tier = tier;
  const CellStats s = RunCell(env, p.Nets(kind), mode, n, seed);
  ResultRow r;
  r.mode = kind;
  r.tier = tier;
  r.protocol = latency.protocol;
  r.key = ControllerKindName(kind) + "/" + TierName(tier) + "/" + ProtocolName(latency.protocol);
  r.episodes = s.episodes;
  r.successes = s.successes;
  r.success_rate = static_cast<double>(s.successes) / s.episodes;
  r.halfwidth = WilsonHalfwidth(s.successes, s.episodes);
  r.mean_length = s.mean_length;
  r.effective_hz = s.effective_hz;
  r.config_hash = p.CheckpointHash(kind);
  return r;
}

ResultRow MakeRow(const Pipeline& p, ControllerKind kind, Tier tier, const ExperimentSpec& spec) {
  return MakeRow(p, kind, tier, spec.latency, spec.n_episodes, spec.seed,
                 ModeFor(p.config, kind, spec.latency));
}

}  // namespace

ResultsTable EvalSuccessRate(const Pipeline& p, const ExperimentSpec& spec) {
  spec.Validate();
  ResultsTable t(spec.name);
  for (Tier tier : spec.tiers) {
    for (ControllerKind kind : spec.modes) t.Add(MakeRow(p, kind, tier, spec));
  }
  return t;
}

ResultsTable AblationSuite(const Pipeline& p, const ExperimentSpec& spec) {
  spec.Validate();
  ResultsTable t(spec.name);
  for (ControllerKind kind : LearnedKinds()) t.Add(MakeRow(p, kind, Tier::kEasy, spec));
  t.Note("paired seeds: episode i of every row uses seed EpisodeSeed(" + std::to_string(spec.seed) +
         ", i)");
  return t;
}

ResultsTable PausedVsNonpaused(const Pipeline& p, const ExperimentSpec& spec) {
  spec.Validate();
  ResultsTable t(spec.name);
  for (ControllerKind kind : spec.modes) {
    for (Tier tier : spec.tiers) {
      LatencyModel paused = spec.latency;
      paused.protocol = Protocol::kPaused;
      LatencyModel nonpaused = spec.latency;
      nonpaused.protocol = Protocol::kNonPaused;
      ResultRow a = MakeRow(p, kind, tier, paused, spec.n_episodes, spec.seed,
                            ModeFor(p.config, kind, paused));
      ResultRow b = MakeRow(p, kind, tier, nonpaused, spec.n_episodes, spec.seed,
                            ModeFor(p.config, kind, nonpaused));
      b.retention = a.success_rate > 0.0 ? b.success_rate / a.success_rate : 0.0;
      t.Add(a);
      t.Add(b);
    }
  }
  t.Note("retention = nonpaused success / paused success on the same seeds");
  return t;
}

ResultsTable HyperparamSweep(const Pipeline& p, const ExperimentSpec& spec, const LogFn& log) {
  spec.Validate();
  const PipelineConfig& cfg = p.config;
  std::vector<Episode> all = p.dynamic_episodes;
  all.insert(all.end(), p.static_episodes.begin(), p.static_episodes.end());
  const TrainingSet data(all, &p.motion, cfg.chunking, cfg.action_pad);
  const int budget = std::max(1, static_cast<int>(std::lround(cfg.tidal_train.steps * cfg.sweep_budget)));

  ResultsTable t(spec.name);
  auto run = [&](const std::string& axis, double value) {
    PolicyTrainConfig train = cfg.tidal_train;
    train.steps = budget;
    (axis == "w" ? train.first_weight : train.alpha) = value;
    if (log) log("sweep " + axis + "=" + std::to_string(value));
    const TrainedPolicy tp = TrainController(cfg, data, p.motion, ControllerKind::kTidal, train);
    ControllerNets nets{&p.motion, &tp.nets};
    EnvConfig env = cfg.env;
    env.tier = Tier::kEasy;
    const CellStats s = RunCell(env, nets, ModeFor(cfg, ControllerKind::kTidal, spec.latency),
                                spec.n_episodes, spec.seed);
    ResultRow r;
    r.mode = ControllerKind::kTidal;
    r.tier = Tier::kEasy;
    r.protocol = spec.latency.protocol;
    r.axis = axis;
    r.axis_value = value;
    std::ostringstream key;
    key << "tidal/" << axis << "=" << value;
    r.key = key.str();
    r.episodes = s.episodes;
    r.successes = s.successes;
    r.success_rate = static_cast<double>(s.successes) / s.episodes;
    r.halfwidth = WilsonHalfwidth(s.successes, s.episodes);
    r.mean_length = s.mean_length;
    r.effective_hz = s.effective_hz;
    r.config_hash = tp.checkpoint_hash ^ p.motion_hash;
    t.Add(r);
  };
  for (double w : spec.sweep_w) run("w", w);
  for (double a : spec.sweep_alpha) run("alpha", a);

  for (const std::string axis : {"w", "alpha"}) {
    const ResultRow* best = nullptr;
    for (const auto& r : t.rows()) {
      if (r.axis == axis && (!best || r.success_rate > best->success_rate)) best = &r;
    }
    if (best) t.Note("argmax " + axis + ": " + best->key);
  }
  t.Note("each cell retrained for " + std::to_string(budget) + " steps (" +
         std::to_string(cfg.sweep_budget) + " of the main budget) on identical data and seeds");
  return t;
}

ResultsTable LifespanSweep(const Pipeline& p, const ExperimentSpec& spec) {
  spec.Validate();
  if (spec.lifespans.empty()) throw ConfigError("lifespan sweep: empty grid");
  const int segment = p.config.chunking.segment_length();
  ResultsTable t(spec.name);
  std::vector<double> ls, rates;
  double reference = -1.0;
  for (int l : spec.lifespans) {
    ControllerMode mode = ModeFor(p.config, ControllerKind::kTidal, spec.latency);
    if (l < segment) throw ConfigError("lifespan sweep: l=" + std::to_string(l) + " is below L");
    mode.lifespan = l;
    ResultRow r = MakeRow(p, ControllerKind::kTidal, Tier::kEasy, spec.latency, spec.n_episodes,
                          spec.seed, mode);
    r.axis = "l";
    r.axis_value = l;
    r.key = "tidal/l=" + std::to_string(l);
    if (l == segment) reference = r.success_rate;
    ls.push_back(l);
    rates.push_back(r.success_rate);
    t.Add(r);
  }
  if (reference < 0.0) reference = t.rows().front().success_rate;
  for (auto& r : t.mutable_rows()) r.retention = reference > 0.0 ? r.success_rate / reference : 0.0;
  if (ls.size() >= 2) {
    std::ostringstream os;
    os << "spearman rho(success, l) = " << std::setprecision(4) << SpearmanRho(ls, rates);
    t.Note(os.str());
  }
  t.Note("intent refresh every l - " + std::to_string(segment - p.config.chunking.horizon) +
         " executed steps");
  return t;
}

void WriteResults(const ResultsTable& table, const std::filesystem::path& path) {
  if (path.empty()) return;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  table.WriteRecords(out);
  std::ofstream txt(path.string() + ".txt");
  table.WriteText(txt);
  if (!out || !txt) throw ConfigError("cannot write results to " + path.string());
}

}  // namespace tidal
