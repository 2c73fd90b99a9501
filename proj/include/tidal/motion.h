#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "tidal/env.h"
#include "tidal/mlp.h"
#include "tidal/oracle.h"

namespace tidal {

inline constexpr int kProprioDim = 4;
inline constexpr int kAuxDim = 6;

// Differential motion predictor. The trunk maps a flattened frame
// difference to the bottleneck embedding m_t; the head branches from the
// bottleneck to the auxiliary kinematic regression (p_t, v_t, p_{t+lag}).
struct MotionNet {
  MlpNetwork trunk;
  MlpNetwork head;
  int lag = 4;

  int embedding_dim() const { return trunk.output_dim(); }
  std::uint64_t Checksum() const;
};

struct MotionArch {
  int hidden = 64;
  int embedding_dim = 8;
  int head_hidden = 32;
  Activation activation = Activation::kTanh;
};

MotionNet MakeMotionNet(const MotionArch& arch, int grid_resolution, SeededRng& rng);
MotionNet MakeMotionNet(int grid_resolution, int hidden, int embedding_dim, int head_hidden,
                        SeededRng& rng, Activation act = Activation::kTanh);

void WriteMotionNet(std::ostream& out, const MotionNet& net);
MotionNet ReadMotionNet(std::istream& in);

// Element-wise (now - past) / max marker intensity, flattened.
Vector DiffFrames(const GridObs& now, const GridObs& past);

// Frame `lag` steps before t in an episode; an all-zero frame for t < lag.
GridObs HistoryFrame(const Episode& ep, int t, int lag);

struct MotionOutput {
  Vector embedding;  // m_t
  Vector aux;        // (p_x, p_y, v_x, v_y, pf_x, pf_y)
};

MotionOutput MotionForward(const MotionNet& net, const Vector& diff);

enum class AuxSubject { kTarget, kEndEffector };
AuxSubject ParseAuxSubject(const std::string& name);
std::string AuxSubjectName(AuxSubject s);

struct AuxTargets {
  Vec2 position;         // p_t
  Vec2 velocity;         // v_t, units/s
  Vec2 future_position;  // p_{t+lag}
};

struct AuxWeights {
  double position = 1.0;
  double velocity = 1.0;
  double future = 1.0;
};

// lambda1 |p^ - p|^2 + lambda2 |v^ - v|^2 + lambda3 |p^_{t+k} - p_{t+k}|^2
double MotionAuxLoss(const Vector& aux_pred, const AuxTargets& targets, const AuxWeights& w);

AuxTargets AuxTargetsAt(const Episode& ep, int t, int lag, AuxSubject subject = AuxSubject::kTarget);

// Concatenation of proprioception with the contact-gated motion embedding.
struct FusedState {
  Vector values;  // kProprioDim + d_m

  Eigen::Index motion_dim() const { return values.size() - kProprioDim; }
};

FusedState FuseState(const std::array<double, kProprioDim>& proprio, const Vector& motion,
                     int contact);

struct MotionTrainConfig {
  int epochs = 12;
  int batches_per_epoch = 200;
  int batch_size = 128;
  AdamConfig adam{};
  AuxWeights weights{};
  AuxSubject subject = AuxSubject::kTarget;
};

struct MotionTrainResult {
  std::vector<double> epoch_loss;  // mean aux loss per epoch
};

// Minimizes the auxiliary loss over (frame pair, kinematics) samples drawn
// uniformly from the free-flight (contact 0) frames of the episodes.
MotionTrainResult TrainMotion(const std::vector<Episode>& episodes, MotionNet& net,
                              const MotionTrainConfig& cfg, SeededRng& rng);

// Mean aux loss plus velocity RMSE (norm of the 2-vector error) over a
// deterministic sweep of free-flight frames.
struct MotionEvalResult {
  double mean_loss = 0.0;
  double velocity_rmse = 0.0;
  double position_rmse = 0.0;
  int frames = 0;
};
MotionEvalResult EvaluateMotion(const std::vector<Episode>& episodes, const MotionNet& net,
                                AuxSubject subject = AuxSubject::kTarget, int stride = 3);

}  // namespace tidal
