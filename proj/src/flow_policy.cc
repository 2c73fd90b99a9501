#include "tidal/flow_policy.h"

#include <cmath>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>

#include "tidal/errors.h"

namespace tidal {

namespace {

int FieldInputDim(int chunk_size, int fused_dim, int intent_dim) {
  return chunk_size + 1 + fused_dim + intent_dim;
}

Matrix AsRow(const Matrix& chunk) {
  return Eigen::Map<const Matrix>(chunk.data(), 1, chunk.size());
}

Matrix AsChunk(const Matrix& row, int horizon) {
  return Eigen::Map<const Matrix>(row.data(), horizon, kActionDim);
}

}  // namespace

void PolicyNets::Validate() const {
  chunking.Validate();
  const int expected = FieldInputDim(chunk_size(), fused_dim, intent.output_dim());
  if (field.input_dim() != expected) {
    throw ConfigError("policy: field expects " + std::to_string(field.input_dim()) +
                      " inputs, conditions provide " + std::to_string(expected));
  }
  if (field.output_dim() != chunk_size()) throw ConfigError("policy: field output must be H*3");
}

PolicyNets MakePolicyNets(const PolicyArch& arch, const ChunkingConfig& chunking, int grid_cells,
                          int fused_dim, bool use_motion, SeededRng& rng) {
  PolicyNets nets;
  nets.chunking = chunking;
  nets.fused_dim = fused_dim;
  nets.use_motion = use_motion;
  nets.intent = MlpNetwork({grid_cells + kTaskTagDim, arch.intent_hidden, arch.intent_dim},
                           arch.activation);
  std::vector<int> dims{FieldInputDim(nets.chunk_size(), fused_dim, arch.intent_dim)};
  for (int i = 0; i < arch.field_layers; ++i) dims.push_back(arch.field_hidden);
  dims.push_back(nets.chunk_size());
  nets.field = MlpNetwork(dims, arch.activation);
  nets.intent.InitializeRandom(rng);
  nets.field.InitializeRandom(rng);
  nets.Validate();
  return nets;
}

Matrix VfForward(const PolicyNets& nets, const Matrix& x_t, double t, const FusedState& fused,
                 const IntentEmbedding& intent) {
  if (x_t.rows() != nets.chunking.horizon || x_t.cols() != kActionDim) {
    throw ConfigError("vf_forward: x_t must be H x 3");
  }
  if (fused.values.size() != nets.fused_dim) throw ConfigError("vf_forward: fused state size mismatch");
  if (intent.values.size() != nets.intent_dim()) throw ConfigError("vf_forward: intent size mismatch");
  Matrix in(1, nets.field.input_dim());
  const int c = nets.chunk_size();
  in.leftCols(c) = AsRow(x_t);
  in(0, c) = t;
  in.block(0, c + 1, 1, nets.fused_dim) = fused.values.transpose();
  in.rightCols(nets.intent_dim()) = intent.values.transpose();
  return AsChunk(nets.field.Forward(in), nets.chunking.horizon);
}

FlowSample MakeFlowSampleAt(const Matrix& x0, const Matrix& x1, double t) {
  if (x0.rows() != x1.rows() || x0.cols() != x1.cols()) throw ConfigError("flow sample: shape mismatch");
  FlowSample s;
  s.x0 = x0;
  s.x1 = x1;
  s.t = t;
  s.x_t = (1.0 - t) * x0 + t * x1;
  s.u = x1 - x0;
  return s;
}

FlowSample MakeFlowSample(SeededRng& rng, const Matrix& x1, double alpha) {
  Matrix x0 = SampleGaussianChunk(rng, static_cast<int>(x1.rows()), static_cast<int>(x1.cols()));
  const double t = SampleBetaTime(rng, alpha, 1.0);
  return MakeFlowSampleAt(x0, x1, t);
}

CfmLossResult CfmLoss(const PolicyNets& nets, const CfmBatch& batch,
                      const std::vector<double>& weights, bool need_grads, const MotionNet* motion) {
  const int h = nets.chunking.horizon;
  const int c = nets.chunk_size();
  const Eigen::Index b = batch.size();
  if (static_cast<int>(weights.size()) != h) throw ConfigError("cfm_loss: need one weight per horizon step");
  if (batch.x_t.cols() != c || batch.u.cols() != c || batch.u.rows() != b || batch.t.size() != b ||
      batch.intent_input.rows() != b) {
    throw ConfigError("cfm_loss: batch shape mismatch");
  }
  const bool composed = motion != nullptr;
  if (!composed && (batch.fused.rows() != b || batch.fused.cols() != nets.fused_dim)) {
    throw ConfigError("cfm_loss: fused block shape mismatch");
  }

  CfmLossResult r;
  MlpCache intent_cache, field_cache, motion_cache;
  const Matrix e = nets.intent.Forward(batch.intent_input, need_grads ? &intent_cache : nullptr);

  Matrix in(b, nets.field.input_dim());
  in.leftCols(c) = batch.x_t;
  in.col(c) = batch.t;
  if (composed) {
    if (batch.proprio.rows() != b || batch.proprio.cols() != kProprioDim ||
        batch.motion_diff.rows() != b || batch.contact.size() != b ||
        nets.fused_dim != kProprioDim + motion->embedding_dim()) {
      throw ConfigError("cfm_loss: composed motion pathway shape mismatch");
    }
    const Matrix m = motion->trunk.Forward(batch.motion_diff, need_grads ? &motion_cache : nullptr);
    in.block(0, c + 1, b, kProprioDim) = batch.proprio;
    const Vector gate = (1.0 - batch.contact.array()).matrix();
    in.block(0, c + 1 + kProprioDim, b, m.cols()) = gate.asDiagonal() * m;
  } else {
    in.block(0, c + 1, b, nets.fused_dim) = batch.fused;
  }
  in.rightCols(e.cols()) = e;

  const Matrix v = nets.field.Forward(in, need_grads ? &field_cache : nullptr);
  const Matrix err = v - batch.u;
  Vector col_w(c);
  for (int i = 0; i < h; ++i) col_w.segment<kActionDim>(i * kActionDim).setConstant(weights[static_cast<std::size_t>(i)]);
  r.loss = (err.array().square().rowwise() * col_w.transpose().array()).sum() / static_cast<double>(b);
  if (!need_grads) return r;

  const Matrix grad_v =
      (2.0 / static_cast<double>(b)) * (err.array().rowwise() * col_w.transpose().array()).matrix();
  Matrix grad_in;
  r.field_grad = nets.field.Backward(field_cache, grad_v, &grad_in);
  const Matrix grad_e = grad_in.rightCols(e.cols());
  r.intent_grad = nets.intent.Backward(intent_cache, grad_e);
  if (composed) {
    const Vector gate = (1.0 - batch.contact.array()).matrix();
    const Matrix grad_m = gate.asDiagonal() * grad_in.block(0, c + 1 + kProprioDim, b, motion->embedding_dim());
    r.motion_grad = motion->trunk.Backward(motion_cache, grad_m);
  }
  return r;
}

Matrix IntegrateFrom(const PolicyNets& nets, const Matrix& x0, const FusedState& fused,
                     const IntentEmbedding& intent, int steps) {
  if (steps < 1) throw ConfigError("multi_step_solve: need at least one solver step");
  Matrix x = x0;
  const double dt = 1.0 / steps;
  for (int k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) / steps;
    x += dt * VfForward(nets, x, t, fused, intent);
  }
  return x;
}

ActionChunk EulerSingleStep(const PolicyNets& nets, SeededRng& rng, const FusedState& fused,
                            const IntentEmbedding& intent) {
  const Matrix x0 = SampleGaussianChunk(rng, nets.chunking.horizon, kActionDim);
  ActionChunk chunk;
  chunk.actions = x0 + VfForward(nets, x0, 0.0, fused, intent);
  chunk.intent_born_step = intent.born_step;
  return chunk;
}

ActionChunk MultiStepSolve(const PolicyNets& nets, SeededRng& rng, const FusedState& fused,
                           const IntentEmbedding& intent, int steps) {
  if (steps < 1) throw ConfigError("multi_step_solve: need at least one solver step");
  const Matrix x0 = SampleGaussianChunk(rng, nets.chunking.horizon, kActionDim);
  ActionChunk chunk;
  chunk.actions = IntegrateFrom(nets, x0, fused, intent, steps);
  chunk.intent_born_step = intent.born_step;
  return chunk;
}

std::string PolicyTrainConfig::Canonical() const {
  std::ostringstream os;
  os << std::setprecision(17) << "alpha=" << alpha << ";w=" << first_weight << ";K=" << stages
     << ";batch=" << batch_size << ";steps=" << steps << ";lr=" << adam.learning_rate
     << ";b1=" << adam.beta1 << ";b2=" << adam.beta2 << ";eps=" << adam.epsilon << ";lr_end=" << final_lr_fraction;
  return os.str();
}

PolicyTrainResult TrainPolicy(const TrainingSet& data, PolicyNets& nets,
                              const PolicyTrainConfig& cfg, SeededRng& rng,
                              const MotionNet* frozen_motion, const CheckpointFn& on_checkpoint) {
  nets.Validate();
  if (nets.chunking.horizon != data.chunking().horizon || nets.chunking.exec != data.chunking().exec) {
    throw ConfigError("train_policy: chunking differs from the training set");
  }
  if (nets.fused_dim != data.fused_dim()) throw ConfigError("train_policy: fused dim mismatch");
  if (cfg.log_every < 1) throw ConfigError("train_policy: log_every must be >= 1");
  if (!(cfg.final_lr_fraction > 0.0 && cfg.final_lr_fraction <= 1.0)) {
    throw ConfigError("train_policy: final_lr_fraction must be in (0, 1]");
  }
  const std::uint64_t motion_sum_before = frozen_motion ? frozen_motion->Checksum() : 0;

  const int h = nets.chunking.horizon;
  const int c = nets.chunk_size();
  const int n = cfg.batch_size;
  const std::vector<double> weights = HorizonWeights(h, nets.chunking.exec, cfg.first_weight);
  BatchStream stream(data, n, cfg.stages, DeriveSeed(rng.seed(), 0x5eed));
  AdamState field_opt(nets.field, cfg.adam);
  AdamState intent_opt(nets.intent, cfg.adam);

  CfmBatch batch;
  batch.x_t.resize(n, c);
  batch.u.resize(n, c);
  batch.t.resize(n);
  batch.intent_input.resize(n, data.grid_cells() + kTaskTagDim);
  batch.fused.resize(n, data.fused_dim());
  Matrix x1(n, c);

  PolicyTrainResult result;
  double window = 0.0;
  for (int step = 1; step <= cfg.steps; ++step) {
    const std::vector<SampleRef> refs = stream.Next();
    for (int i = 0; i < n; ++i) {
      const SampleRef& s = refs[static_cast<std::size_t>(i)];
      const int state_step = s.anchor + s.stage * nets.chunking.exec;
      data.FillIntentRow(s.episode, s.anchor, batch.intent_input.row(i).data());
      data.FillFusedRow(s.episode, state_step, nets.use_motion, batch.fused.row(i).data());
      data.FillActionRow(s.episode, state_step, x1.row(i).data());
      const double t = SampleBetaTime(rng, cfg.alpha, 1.0);
      batch.t[i] = t;
      for (int j = 0; j < c; ++j) {
        const double x0 = rng.Gaussian();
        batch.x_t(i, j) = (1.0 - t) * x0 + t * x1(i, j);
        batch.u(i, j) = x1(i, j) - x0;
      }
    }
    const CfmLossResult r = CfmLoss(nets, batch, weights);
    if (!std::isfinite(r.loss)) {
      std::ostringstream diag;
      diag << "train_policy: loss diverged at step " << step << " (loss=" << r.loss
           << ", field grad^2=" << r.field_grad.SquaredNorm()
           << ", intent grad^2=" << r.intent_grad.SquaredNorm() << ", recent curve:";
      for (std::size_t k = result.loss_curve.size() > 5 ? result.loss_curve.size() - 5 : 0;
           k < result.loss_curve.size(); ++k) {
        diag << ' ' << result.loss_curve[k];
      }
      diag << ")";
      std::cerr << diag.str() << '\n';
      throw TrainingError(diag.str());
    }
    const double progress = static_cast<double>(step - 1) / cfg.steps;
    const double lr = cfg.adam.learning_rate *
                      (cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * 0.5 *
                                                   (1.0 + std::cos(std::numbers::pi * progress)));
    field_opt.set_learning_rate(lr);
    intent_opt.set_learning_rate(lr);
    field_opt.Step(nets.field, r.field_grad);
    intent_opt.Step(nets.intent, r.intent_grad);
    window += r.loss;
    if (step % cfg.log_every == 0) {
      result.loss_curve.push_back(window / cfg.log_every);
      window = 0.0;
    }
    if (on_checkpoint && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
      on_checkpoint(step, nets);
    }
  }
  if (frozen_motion && frozen_motion->Checksum() != motion_sum_before) {
    throw TrainingError("train_policy: motion net changed during policy training");
  }
  return result;
}

void WritePolicy(std::ostream& out, const PolicyNets& nets, std::uint64_t train_config_hash) {
  out << "tidal-policy 1\n";
  out << "chunking " << nets.chunking.horizon << ' ' << nets.chunking.exec << ' '
      << nets.chunking.stages << '\n';
  out << "fused " << nets.fused_dim << " motion " << int{nets.use_motion} << '\n';
  out << "train_config " << train_config_hash << '\n';
  WriteMlp(out, nets.intent);
  WriteMlp(out, nets.field);
}

PolicyNets ReadPolicy(std::istream& in, std::uint64_t* train_config_hash) {
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "tidal-policy" || version != 1) {
    throw ConfigError("not a tidal-policy v1 stream");
  }
  PolicyNets nets;
  std::string motion_tag;
  int use_motion = 0;
  std::uint64_t hash = 0;
  if (!(in >> tag >> nets.chunking.horizon >> nets.chunking.exec >> nets.chunking.stages) ||
      tag != "chunking") {
    throw ConfigError("tidal-policy: missing chunking");
  }
  if (!(in >> tag >> nets.fused_dim >> motion_tag >> use_motion) || tag != "fused") {
    throw ConfigError("tidal-policy: missing fused header");
  }
  if (!(in >> tag >> hash) || tag != "train_config") throw ConfigError("tidal-policy: missing config hash");
  nets.use_motion = use_motion != 0;
  nets.intent = ReadMlp(in);
  nets.field = ReadMlp(in);
  nets.Validate();
  if (train_config_hash) *train_config_hash = hash;
  return nets;
}

}  // namespace tidal
