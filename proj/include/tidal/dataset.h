#pragma once

#include <vector>

#include "tidal/intent.h"
#include "tidal/motion.h"
#include "tidal/oracle.h"

namespace tidal {

inline constexpr int kActionDim = 3;

// H: prediction horizon, N: executed prefix, K: latency stages.
struct ChunkingConfig {
  int horizon = 16;
  int exec = 4;
  int stages = 4;

  int segment_length() const;
  void Validate() const;
};

// L = H + (K - 1) * N
int SegmentLength(int horizon, int stages, int exec);

int SampleLatencyStage(SeededRng& rng, int stages);

// w_i = first_weight for i < exec, 1 otherwise.
std::vector<double> HorizonWeights(int horizon, int exec, double first_weight);

// Chunks live in normalized units: displacement as a fraction of the
// per-step speed limit, grip unchanged.
void NormalizeAction(const Action& a, const EnvConfig& cfg, double* row);
Action DenormalizeAction(const double* row, const EnvConfig& cfg);

struct MisalignedSample {
  GridObs macro_obs;  // anchor tau
  TaskTag task_tag = TaskTag::kDynamic;
  int anchor = 0;
  int latency_stage = 0;
  int state_step = 0;  // tau + k N
  FusedState fused_state;
  Matrix action_target;  // H x 3, normalized
  std::vector<double> weights;
};

// Builds a sample from scratch, running the motion net on the frame pair
// (tau + kN, tau + kN - lag). With a null motion net the fused state carries
// proprioception only.
MisalignedSample BuildSample(const Episode& ep, int anchor, int stage, const ChunkingConfig& cfg,
                             const MotionNet* motion, double first_weight = 2.0);

// Episodes plus per-step motion embeddings precomputed with a frozen
// motion net. With pad_after > 0, chunks may run up to that many steps past
// the final action, which is repeated (edge padding); the state step always
// stays inside the episode.
class TrainingSet {
 public:
  TrainingSet(std::vector<Episode> episodes, const MotionNet* motion, ChunkingConfig chunking,
              int pad_after = 0);

  const std::vector<Episode>& episodes() const { return episodes_; }
  const ChunkingConfig& chunking() const { return chunking_; }
  int pad_after() const { return pad_after_; }
  int motion_dim() const { return motion_dim_; }
  int fused_dim() const { return kProprioDim + motion_dim_; }
  int grid_cells() const;
  // Embedding m_t for step t of episode e (zero vector if no motion net).
  const Vector& Embedding(int e, int t) const;

  // Writes sample inputs into batch rows.
  void FillIntentRow(int e, int anchor, double* row) const;
  void FillFusedRow(int e, int step, bool use_motion, double* row) const;
  void FillActionRow(int e, int step, double* row) const;  // H*3 entries

 private:
  std::vector<Episode> episodes_;
  ChunkingConfig chunking_;
  int pad_after_ = 0;
  int motion_dim_ = 0;
  std::vector<std::vector<Vector>> embeddings_;
};

struct SampleRef {
  int episode = 0;
  int anchor = 0;
  int stage = 0;
};

// Infinite stream of batches; every sample draws its episode, anchor and
// stage independently. `stages` may be lower than chunking.stages (K = 1
// gives synchronous training).
class BatchStream {
 public:
  BatchStream(const TrainingSet& set, int batch_size, int stages, std::uint64_t seed);
  std::vector<SampleRef> Next();

 private:
  const TrainingSet& set_;
  int batch_size_;
  int stages_;
  SeededRng rng_;
  std::vector<int> eligible_;
};

}  // namespace tidal
