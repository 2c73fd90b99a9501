#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "tidal/dataset.h"
#include "tidal/intent.h"
#include "tidal/mlp.h"
#include "tidal/motion.h"

namespace tidal {

struct PolicyArch {
  int intent_hidden = 128;
  int intent_dim = 32;
  int field_hidden = 128;
  int field_layers = 2;
  Activation activation = Activation::kTanh;
};

// Intent encoder plus the conditional vector field. The field sees
// [x_t (H*3), t, fused state, intent] and returns an H*3 velocity.
struct PolicyNets {
  MlpNetwork intent;
  MlpNetwork field;
  ChunkingConfig chunking;
  int fused_dim = kProprioDim;
  bool use_motion = true;

  int chunk_size() const { return chunking.horizon * kActionDim; }
  int intent_dim() const { return intent.output_dim(); }
  void Validate() const;
};

PolicyNets MakePolicyNets(const PolicyArch& arch, const ChunkingConfig& chunking, int grid_cells,
                          int fused_dim, bool use_motion, SeededRng& rng);

struct ActionChunk {
  Matrix actions;  // H x 3, normalized units
  int generated_step = 0;
  int intent_born_step = 0;
};

// v_theta(x_t, t, fused, intent) reshaped to H x 3.
Matrix VfForward(const PolicyNets& nets, const Matrix& x_t, double t, const FusedState& fused,
                 const IntentEmbedding& intent);

// Straight-line path between noise x0 and data x1.
struct FlowSample {
  Matrix x0;
  Matrix x1;
  double t = 0.0;
  Matrix x_t;  // (1 - t) x0 + t x1
  Matrix u;    // x1 - x0
};

FlowSample MakeFlowSampleAt(const Matrix& x0, const Matrix& x1, double t);
// x0 ~ N(0, I), t = 1 - Beta(alpha, 1).
FlowSample MakeFlowSample(SeededRng& rng, const Matrix& x1, double alpha);

// One row per sample. Either `fused` is given directly, or the composed
// motion pathway is used: fused = [proprio, (1 - contact) * trunk(motion_diff)].
struct CfmBatch {
  Matrix x_t;           // B x H*3
  Vector t;             // B
  Matrix u;             // B x H*3
  Matrix intent_input;  // B x (G^2 + 2)
  Matrix fused;         // B x fused_dim
  Matrix proprio;       // B x 4 (composed pathway)
  Matrix motion_diff;   // B x G^2 (composed pathway)
  Vector contact;       // B (composed pathway)

  Eigen::Index size() const { return x_t.rows(); }
};

struct CfmLossResult {
  double loss = 0.0;
  MlpGradients field_grad;
  MlpGradients intent_grad;
  MlpGradients motion_grad;  // trunk, composed pathway only
};

// mean_b sum_i w_i |v^(i) - u^(i)|^2 with i over horizon steps.
CfmLossResult CfmLoss(const PolicyNets& nets, const CfmBatch& batch,
                      const std::vector<double>& weights, bool need_grads = true,
                      const MotionNet* motion = nullptr);

// a = x0 + v(x0, 0, fused, intent) with fresh noise x0.
ActionChunk EulerSingleStep(const PolicyNets& nets, SeededRng& rng, const FusedState& fused,
                            const IntentEmbedding& intent);
// Forward Euler from fresh noise over t = 0, 1/K, ..., (K-1)/K.
ActionChunk MultiStepSolve(const PolicyNets& nets, SeededRng& rng, const FusedState& fused,
                           const IntentEmbedding& intent, int steps);
// Deterministic core of both solvers.
Matrix IntegrateFrom(const PolicyNets& nets, const Matrix& x0, const FusedState& fused,
                     const IntentEmbedding& intent, int steps);

struct PolicyTrainConfig {
  double alpha = 5.0;
  double first_weight = 2.0;
  int stages = 4;  // latency stages sampled; 1 = synchronous
  int batch_size = 128;
  int steps = 20000;
  AdamConfig adam{};
  // Cosine decay from adam.learning_rate to this fraction of it; 1 = constant.
  double final_lr_fraction = 1.0;
  int log_every = 200;
  int checkpoint_every = 0;

  std::string Canonical() const;
};

struct PolicyTrainResult {
  std::vector<double> loss_curve;  // mean loss per log window
};

using CheckpointFn = std::function<void(int step, const PolicyNets& nets)>;

// Joint optimization of the field and the intent encoder on misaligned
// batches. The motion net (if any) must stay untouched; its checksum is
// compared before and after.
PolicyTrainResult TrainPolicy(const TrainingSet& data, PolicyNets& nets,
                              const PolicyTrainConfig& cfg, SeededRng& rng,
                              const MotionNet* frozen_motion = nullptr,
                              const CheckpointFn& on_checkpoint = {});

// Checkpoint bundle: header with chunking and training-config hash, then the
// intent and field networks in the shared MLP text format.
void WritePolicy(std::ostream& out, const PolicyNets& nets, std::uint64_t train_config_hash);
PolicyNets ReadPolicy(std::istream& in, std::uint64_t* train_config_hash = nullptr);

}  // namespace tidal
