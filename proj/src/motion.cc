#include "tidal/motion.h"

#include <cmath>
#include <istream>
#include <ostream>

#include "tidal/errors.h"

namespace tidal {

std::uint64_t MotionNet::Checksum() const {
  std::uint64_t h = trunk.Checksum();
  const std::uint64_t hh = head.Checksum();
  h = Fnv1a(&hh, sizeof(hh), h);
  return Fnv1a(&lag, sizeof(lag), h);
}

MotionNet MakeMotionNet(int grid_resolution, int hidden, int embedding_dim, int head_hidden,
                        SeededRng& rng, Activation act) {
  MotionNet net;
  net.trunk = MlpNetwork({grid_resolution * grid_resolution, hidden, embedding_dim}, act);
  net.head = MlpNetwork({embedding_dim, head_hidden, kAuxDim}, act);
  net.trunk.InitializeRandom(rng);
  net.head.InitializeRandom(rng);
  return net;
}

MotionNet MakeMotionNet(const MotionArch& arch, int grid_resolution, SeededRng& rng) {
  return MakeMotionNet(grid_resolution, arch.hidden, arch.embedding_dim, arch.head_hidden, rng,
                       arch.activation);
}

void WriteMotionNet(std::ostream& out, const MotionNet& net) {
  out << "tidal-motion 1\nlag " << net.lag << '\n';
  WriteMlp(out, net.trunk);
  WriteMlp(out, net.head);
}

MotionNet ReadMotionNet(std::istream& in) {
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "tidal-motion" || version != 1) {
    throw ConfigError("not a tidal-motion v1 stream");
  }
  MotionNet net;
  if (!(in >> tag >> net.lag) || tag != "lag") throw ConfigError("tidal-motion: missing lag");
  net.trunk = ReadMlp(in);
  net.head = ReadMlp(in);
  if (net.head.input_dim() != net.trunk.output_dim() || net.head.output_dim() != kAuxDim) {
    throw ConfigError("tidal-motion: head does not match trunk");
  }
  return net;
}

Vector DiffFrames(const GridObs& now, const GridObs& past) {
  if (now.resolution != past.resolution || now.cells.size() != past.cells.size()) {
    throw ConfigError("diff_frames: resolution mismatch");
  }
  Vector d(static_cast<Eigen::Index>(now.cells.size()));
  for (std::size_t i = 0; i < now.cells.size(); ++i) {
    d[static_cast<Eigen::Index>(i)] = (now.cells[i] - past.cells[i]) / GridObs::kMaxIntensity;
  }
  return d;
}

GridObs HistoryFrame(const Episode& ep, int t, int lag) {
  if (t < lag) return GridObs::Zeros(ep.config.grid_resolution);
  return ep.Grid(t - lag);
}

MotionOutput MotionForward(const MotionNet& net, const Vector& diff) {
  if (diff.size() != net.trunk.input_dim()) {
    throw ConfigError("motion_forward: diff has " + std::to_string(diff.size()) +
                      " entries, trunk expects " + std::to_string(net.trunk.input_dim()));
  }
  if (net.head.input_dim() != net.trunk.output_dim()) {
    throw ConfigError("motion_forward: head does not match bottleneck");
  }
  MotionOutput out;
  out.embedding = net.trunk.Forward(diff);
  out.aux = net.head.Forward(out.embedding);
  return out;
}

AuxSubject ParseAuxSubject(const std::string& name) {
  if (name == "target") return AuxSubject::kTarget;
  if (name == "end_effector") return AuxSubject::kEndEffector;
  throw ConfigError("unknown aux subject '" + name + "'");
}

std::string AuxSubjectName(AuxSubject s) {
  return s == AuxSubject::kTarget ? "target" : "end_effector";
}

double MotionAuxLoss(const Vector& aux_pred, const AuxTargets& targets, const AuxWeights& w) {
  if (aux_pred.size() != kAuxDim) throw ConfigError("motion_aux_loss: prediction must have 6 entries");
  if (w.position < 0.0 || w.velocity < 0.0 || w.future < 0.0) {
    throw ConfigError("motion_aux_loss: weights must be non-negative");
  }
  const Vec2 ep = aux_pred.segment<2>(0) - targets.position;
  const Vec2 ev = aux_pred.segment<2>(2) - targets.velocity;
  const Vec2 ef = aux_pred.segment<2>(4) - targets.future_position;
  return w.position * ep.squaredNorm() + w.velocity * ev.squaredNorm() +
         w.future * ef.squaredNorm();
}

AuxTargets AuxTargetsAt(const Episode& ep, int t, int lag, AuxSubject subject) {
  const int last = static_cast<int>(ep.states.size()) - 1;
  if (t < 0 || t > last) throw SamplingError("aux targets: time index out of range");
  const auto& s = ep.states[static_cast<std::size_t>(t)];
  const auto& future = ep.states[static_cast<std::size_t>(std::min(t + lag, last))];
  const double dt = ep.config.dt;
  AuxTargets a;
  if (subject == AuxSubject::kTarget) {
    a.position = s.target_pos;
    a.future_position = future.target_pos;
    if (!s.held) {
      a.velocity = s.target_vel;
    } else {
      a.velocity = t > 0 ? Vec2((s.target_pos - ep.states[static_cast<std::size_t>(t - 1)].target_pos) / dt)
                         : Vec2::Zero();
    }
  } else {
    a.position = s.ee_pos;
    a.future_position = future.ee_pos;
    a.velocity = t > 0 ? Vec2((s.ee_pos - ep.states[static_cast<std::size_t>(t - 1)].ee_pos) / dt)
                       : Vec2::Zero();
  }
  return a;
}

FusedState FuseState(const std::array<double, kProprioDim>& proprio, const Vector& motion,
                     int contact) {
  if (contact != 0 && contact != 1) throw ConfigError("fuse_state: contact must be 0 or 1");
  FusedState f;
  f.values.resize(kProprioDim + motion.size());
  for (int i = 0; i < kProprioDim; ++i) f.values[i] = proprio[static_cast<std::size_t>(i)];
  if (contact == 1) {
    f.values.tail(motion.size()).setZero();
  } else {
    f.values.tail(motion.size()) = motion;
  }
  return f;
}

namespace {

struct FrameRef {
  int episode;
  int t;
};

void FillAuxRow(const AuxTargets& a, double* row) {
  row[0] = a.position.x();
  row[1] = a.position.y();
  row[2] = a.velocity.x();
  row[3] = a.velocity.y();
  row[4] = a.future_position.x();
  row[5] = a.future_position.y();
}

}  // namespace

MotionTrainResult TrainMotion(const std::vector<Episode>& episodes, MotionNet& net,
                              const MotionTrainConfig& cfg, SeededRng& rng) {
  if (episodes.empty()) throw GenerationError("train_motion: empty dataset");
  const int cells = net.trunk.input_dim();
  const Vector lambda = (Vector(kAuxDim) << cfg.weights.position, cfg.weights.position,
                         cfg.weights.velocity, cfg.weights.velocity, cfg.weights.future,
                         cfg.weights.future)
                            .finished();
  // The embedding is gated off while the target is held, so only free-flight
  // frames are regressed.
  std::vector<FrameRef> frames;
  for (int e = 0; e < static_cast<int>(episodes.size()); ++e) {
    const auto& states = episodes[static_cast<std::size_t>(e)].states;
    for (int t = 0; t < static_cast<int>(states.size()); ++t) {
      if (ContactState(states[static_cast<std::size_t>(t)]) == 0) frames.push_back({e, t});
    }
  }
  if (frames.empty()) throw GenerationError("train_motion: no free-flight frames");
  AdamState trunk_opt(net.trunk, cfg.adam);
  AdamState head_opt(net.head, cfg.adam);
  MotionTrainResult result;
  Matrix diff(cfg.batch_size, cells);
  Matrix target(cfg.batch_size, kAuxDim);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_sum = 0.0;
    for (int b = 0; b < cfg.batches_per_epoch; ++b) {
      for (int i = 0; i < cfg.batch_size; ++i) {
        const FrameRef f = frames[static_cast<std::size_t>(rng.UniformInt(static_cast<int>(frames.size())))];
        const auto& ep = episodes[static_cast<std::size_t>(f.episode)];
        const int t = f.t;
        diff.row(i) = DiffFrames(ep.Grid(t), HistoryFrame(ep, t, net.lag)).transpose();
        FillAuxRow(AuxTargetsAt(ep, t, net.lag, cfg.subject), target.row(i).data());
      }
      MlpCache trunk_cache, head_cache;
      const Matrix m = net.trunk.Forward(diff, &trunk_cache);
      const Matrix pred = net.head.Forward(m, &head_cache);
      const Matrix err = pred - target;
      const double loss =
          (err.array().square().rowwise() * lambda.transpose().array()).sum() / cfg.batch_size;
      if (!std::isfinite(loss)) throw TrainingError("train_motion: non-finite loss");
      epoch_sum += loss;
      const Matrix grad_out =
          (2.0 / cfg.batch_size) * (err.array().rowwise() * lambda.transpose().array()).matrix();
      Matrix grad_m;
      const MlpGradients head_grads = net.head.Backward(head_cache, grad_out, &grad_m);
      const MlpGradients trunk_grads = net.trunk.Backward(trunk_cache, grad_m);
      head_opt.Step(net.head, head_grads);
      trunk_opt.Step(net.trunk, trunk_grads);
    }
    result.epoch_loss.push_back(epoch_sum / cfg.batches_per_epoch);
  }
  return result;
}

MotionEvalResult EvaluateMotion(const std::vector<Episode>& episodes, const MotionNet& net,
                                AuxSubject subject, int stride) {
  MotionEvalResult r;
  double vel_sq = 0.0, pos_sq = 0.0, loss = 0.0;
  for (const auto& ep : episodes) {
    for (int t = 0; t < static_cast<int>(ep.states.size()); t += stride) {
      if (ContactState(ep.states[static_cast<std::size_t>(t)]) == 1) continue;
      const MotionOutput out = MotionForward(net, DiffFrames(ep.Grid(t), HistoryFrame(ep, t, net.lag)));
      const AuxTargets a = AuxTargetsAt(ep, t, net.lag, subject);
      loss += MotionAuxLoss(out.aux, a, {});
      vel_sq += (out.aux.segment<2>(2) - a.velocity).squaredNorm();
      pos_sq += (out.aux.segment<2>(0) - a.position).squaredNorm();
      ++r.frames;
    }
  }
  if (r.frames == 0) throw AnalysisError("evaluate_motion: no frames");
  r.mean_loss = loss / r.frames;
  r.velocity_rmse = std::sqrt(vel_sq / r.frames);
  r.position_rmse = std::sqrt(pos_sq / r.frames);
  return r;
}

}  // namespace tidal
