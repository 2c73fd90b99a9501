#include "tidal/dataset.h"

#include <algorithm>

#include "tidal/errors.h"

namespace tidal {

int SegmentLength(int horizon, int stages, int exec) {
  if (horizon < 1 || stages < 1 || exec < 1) throw ConfigError("segment_length: H, K, N must be >= 1");
  return horizon + (stages - 1) * exec;
}

int ChunkingConfig::segment_length() const { return SegmentLength(horizon, stages, exec); }

void ChunkingConfig::Validate() const {
  if (horizon < 1 || stages < 1 || exec < 1) throw ConfigError("chunking: H, K, N must be >= 1");
  if (horizon % exec != 0) throw ConfigError("chunking: N must divide H");
}

int SampleLatencyStage(SeededRng& rng, int stages) {
  if (stages < 1) throw ConfigError("sample_latency_stage: K must be >= 1");
  return rng.UniformInt(stages);
}

std::vector<double> HorizonWeights(int horizon, int exec, double first_weight) {
  std::vector<double> w(static_cast<std::size_t>(horizon), 1.0);
  for (int i = 0; i < std::min(exec, horizon); ++i) w[static_cast<std::size_t>(i)] = first_weight;
  return w;
}

void NormalizeAction(const Action& a, const EnvConfig& cfg, double* row) {
  const double s = cfg.max_step();
  row[0] = a.dx / s;
  row[1] = a.dy / s;
  row[2] = a.grip;
}

Action DenormalizeAction(const double* row, const EnvConfig& cfg) {
  const double s = cfg.max_step();
  return {row[0] * s, row[1] * s, row[2]};
}

namespace {

Vector EmbeddingAt(const Episode& ep, int t, const MotionNet& motion) {
  return MotionForward(motion, DiffFrames(ep.Grid(t), HistoryFrame(ep, t, motion.lag))).embedding;
}

}  // namespace

MisalignedSample BuildSample(const Episode& ep, int anchor, int stage, const ChunkingConfig& cfg,
                             const MotionNet* motion, double first_weight) {
  cfg.Validate();
  if (stage < 0 || stage >= cfg.stages) throw SamplingError("build_sample: stage out of range");
  if (anchor < 0 || anchor + cfg.segment_length() > ep.length()) {
    throw SamplingError("build_sample: segment overruns episode");
  }
  MisalignedSample s;
  s.macro_obs = ep.Grid(anchor);
  s.task_tag = TaskTagFor(ep.config.tier);
  s.anchor = anchor;
  s.latency_stage = stage;
  s.state_step = anchor + stage * cfg.exec;
  const auto& st = ep.states[static_cast<std::size_t>(s.state_step)];
  const Vector m = motion ? EmbeddingAt(ep, s.state_step, *motion) : Vector();
  s.fused_state = FuseState(Proprio(st), m, ContactState(st));
  s.action_target.resize(cfg.horizon, kActionDim);
  for (int i = 0; i < cfg.horizon; ++i) {
    NormalizeAction(ep.actions[static_cast<std::size_t>(s.state_step + i)], ep.config,
                    s.action_target.row(i).data());
  }
  s.weights = HorizonWeights(cfg.horizon, cfg.exec, first_weight);
  return s;
}

TrainingSet::TrainingSet(std::vector<Episode> episodes, const MotionNet* motion,
                         ChunkingConfig chunking, int pad_after)
    : episodes_(std::move(episodes)), chunking_(chunking), pad_after_(pad_after) {
  chunking_.Validate();
  if (pad_after < 0 || pad_after >= chunking_.horizon) {
    throw ConfigError("training set: pad_after must be in [0, H)");
  }
  if (episodes_.empty()) throw GenerationError("training set: no episodes");
  motion_dim_ = motion ? motion->embedding_dim() : 0;
  embeddings_.resize(episodes_.size());
  for (std::size_t e = 0; e < episodes_.size(); ++e) {
    const Episode& ep = episodes_[e];
    const int n = static_cast<int>(ep.states.size());
    if (!motion) {
      embeddings_[e].assign(static_cast<std::size_t>(n), Vector());
      continue;
    }
    // Batch all frames of the episode through the trunk at once.
    Matrix diffs(n, motion->trunk.input_dim());
    for (int t = 0; t < n; ++t) {
      diffs.row(t) = DiffFrames(ep.Grid(t), HistoryFrame(ep, t, motion->lag)).transpose();
    }
    const Matrix m = motion->trunk.Forward(diffs);
    embeddings_[e].reserve(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) embeddings_[e].push_back(m.row(t).transpose());
  }
}

int TrainingSet::grid_cells() const {
  const int g = episodes_.front().config.grid_resolution;
  return g * g;
}

const Vector& TrainingSet::Embedding(int e, int t) const {
  return embeddings_[static_cast<std::size_t>(e)][static_cast<std::size_t>(t)];
}

void TrainingSet::FillIntentRow(int e, int anchor, double* row) const {
  const Episode& ep = episodes_[static_cast<std::size_t>(e)];
  WriteIntentInput(ep.Grid(anchor), TaskTagFor(ep.config.tier), row);
}

void TrainingSet::FillFusedRow(int e, int step, bool use_motion, double* row) const {
  const Episode& ep = episodes_[static_cast<std::size_t>(e)];
  const auto& st = ep.states[static_cast<std::size_t>(step)];
  const auto prop = Proprio(st);
  std::copy(prop.begin(), prop.end(), row);
  const bool gate_open = use_motion && ContactState(st) == 0;
  for (int i = 0; i < motion_dim_; ++i) {
    row[kProprioDim + i] = gate_open ? Embedding(e, step)[i] : 0.0;
  }
}

void TrainingSet::FillActionRow(int e, int step, double* row) const {
  const Episode& ep = episodes_[static_cast<std::size_t>(e)];
  const int last = ep.length() - 1;
  for (int i = 0; i < chunking_.horizon; ++i) {
    const int t = std::min(step + i, last);
    NormalizeAction(ep.actions[static_cast<std::size_t>(t)], ep.config, row + i * kActionDim);
  }
}

BatchStream::BatchStream(const TrainingSet& set, int batch_size, int stages, std::uint64_t seed)
    : set_(set), batch_size_(batch_size), stages_(stages), rng_(seed) {
  if (batch_size < 1) throw ConfigError("batch_iter: batch size must be >= 1");
  if (stages < 1 || stages > set.chunking().stages) {
    throw ConfigError("batch_iter: stages must be in [1, K]");
  }
  const int seg = SegmentLength(set.chunking().horizon, stages_, set.chunking().exec);
  for (int e = 0; e < static_cast<int>(set.episodes().size()); ++e) {
    if (set.episodes()[static_cast<std::size_t>(e)].length() + set.pad_after() >= seg) {
      eligible_.push_back(e);
    }
  }
  if (eligible_.empty()) throw GenerationError("batch_iter: no episode is long enough");
}

std::vector<SampleRef> BatchStream::Next() {
  const int seg = SegmentLength(set_.chunking().horizon, stages_, set_.chunking().exec);
  std::vector<SampleRef> batch(static_cast<std::size_t>(batch_size_));
  for (auto& s : batch) {
    s.episode = eligible_[static_cast<std::size_t>(rng_.UniformInt(static_cast<int>(eligible_.size())))];
    const int len = set_.episodes()[static_cast<std::size_t>(s.episode)].length();
    s.anchor = rng_.UniformInt(len + set_.pad_after() - seg + 1);
    s.stage = SampleLatencyStage(rng_, stages_);
  }
  return batch;
}

}  // namespace tidal
