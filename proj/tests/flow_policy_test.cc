#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "gradcheck.h"
#include "tidal/errors.h"
#include "tidal/flow_policy.h"
#include "tidal/oracle.h"

namespace tidal {
namespace {

PolicyNets SmallNets(std::uint64_t seed, ChunkingConfig chunking = {}, int fused_dim = 12) {
  SeededRng rng(seed);
  PolicyArch arch;
  arch.intent_hidden = 16;
  arch.intent_dim = 8;
  arch.field_hidden = 32;
  return MakePolicyNets(arch, chunking, 256, fused_dim, true, rng);
}

// Field with zero weights: v = output bias for every input.
PolicyNets ConstantField(const Matrix& c, ChunkingConfig chunking = {}) {
  PolicyNets nets = SmallNets(1, chunking);
  for (auto& layer : nets.field.layers()) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  nets.field.layers().back().bias = Eigen::Map<const Vector>(c.data(), c.size());
  return nets;
}

FusedState RandomFused(SeededRng& rng, int dim = 12) {
  FusedState f;
  f.values = Vector::NullaryExpr(dim, [&] { return rng.Uniform(); });
  return f;
}

IntentEmbedding RandomIntent(SeededRng& rng, int dim = 8) {
  IntentEmbedding e;
  e.values = Vector::NullaryExpr(dim, [&] { return rng.Gaussian(); });
  return e;
}

TEST_CASE("zero-weight field returns the reshaped biases") {
  SeededRng rng(2);
  const Matrix c = SampleGaussianChunk(rng, 16, 3);
  const PolicyNets nets = ConstantField(c);
  const Matrix v = VfForward(nets, SampleGaussianChunk(rng, 16, 3), 0.3, RandomFused(rng), RandomIntent(rng));
  CHECK(v == c);
}

TEST_CASE("vf_forward is deterministic and checks shapes") {
  const PolicyNets nets = SmallNets(3);
  SeededRng rng(4);
  const Matrix x = SampleGaussianChunk(rng, 16, 3);
  const FusedState f = RandomFused(rng);
  const IntentEmbedding e = RandomIntent(rng);
  CHECK(VfForward(nets, x, 0.5, f, e) == VfForward(nets, x, 0.5, f, e));
  CHECK_THROWS_AS(VfForward(nets, SampleGaussianChunk(rng, 8, 3), 0.5, f, e), ConfigError);
  CHECK_THROWS_AS(VfForward(nets, x, 0.5, RandomFused(rng, 4), e), ConfigError);
  CHECK_THROWS_AS(VfForward(nets, x, 0.5, f, RandomIntent(rng, 3)), ConfigError);
}

TEST_CASE("flow sample path algebra") {
  SeededRng rng(5);
  const Matrix x1 = SampleGaussianChunk(rng, 16, 3);
  const Matrix x0 = SampleGaussianChunk(rng, 16, 3);
  CHECK(MakeFlowSampleAt(x0, x1, 0.0).x_t == x0);
  CHECK(MakeFlowSampleAt(x0, x1, 1.0).x_t == x1);
  for (int i = 0; i < 200; ++i) {
    const FlowSample s = MakeFlowSample(rng, x1, 5.0);
    CHECK(s.t >= 0.0);
    CHECK(s.t <= 1.0);
    CHECK(s.u == s.x1 - s.x0);
    CHECK(((s.x_t - s.x0) - s.t * s.u).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(MakeFlowSampleAt(s.x0, s.x1, 0.0).x_t == s.x0);
    CHECK(MakeFlowSampleAt(s.x0, s.x1, 1.0).x_t == s.x1);
  }
}

CfmBatch ConstantBatch(const PolicyNets& nets, const Matrix& u_rows) {
  CfmBatch b;
  const Eigen::Index n = u_rows.rows();
  b.u = u_rows;
  b.x_t = Matrix::Zero(n, nets.chunk_size());
  b.t = Vector::Zero(n);
  b.intent_input = Matrix::Zero(n, 258);
  b.fused = Matrix::Zero(n, nets.fused_dim);
  return b;
}

TEST_CASE("cfm loss: oracle field gives zero") {
  SeededRng rng(6);
  const Matrix u = SampleGaussianChunk(rng, 16, 3);
  const PolicyNets nets = ConstantField(u);
  Matrix rows(3, 48);
  for (int i = 0; i < 3; ++i) rows.row(i) = Eigen::Map<const Matrix>(u.data(), 1, 48);
  CHECK(CfmLoss(nets, ConstantBatch(nets, rows), HorizonWeights(16, 4, 2.0)).loss == 0.0);
}

TEST_CASE("cfm loss: H=2 hand value and weight linearity") {
  const ChunkingConfig chunking{2, 1, 1};
  // Field outputs zero, so the per-step error is |u_i|^2.
  const PolicyNets nets = ConstantField(Matrix::Zero(2, 3), chunking);
  Matrix u(1, 6);
  u << 0.5, 0.5, 0.0,  // |.|^2 = 0.5
      1.0, 0.0, 0.0;   // |.|^2 = 1.0
  const CfmBatch batch = ConstantBatch(nets, u);
  CHECK(CfmLoss(nets, batch, {2.0, 1.0}).loss == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::abs(CfmLoss(nets, batch, {2.0, 1.0}).loss - 2.0) <= 1e-12);
  // Uniform weights reduce to the plain squared error.
  CHECK(CfmLoss(nets, batch, {1.0, 1.0}).loss == doctest::Approx(1.5).epsilon(1e-12));
  // Doubling w_0 doubles step 0's contribution only.
  const double base = CfmLoss(nets, batch, {1.0, 1.0}).loss;
  const double doubled = CfmLoss(nets, batch, {2.0, 1.0}).loss;
  CHECK(doubled - base == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(CfmLoss(nets, batch, {1.0}), ConfigError);
}

TEST_CASE("composed cfm gradients match central differences") {
  const testing::GradCheckReport r = testing::CheckComposedCfmGradients(300, 21);
  CAPTURE(r.worst_field);
  CAPTURE(r.worst_intent);
  CAPTURE(r.worst_motion);
  CHECK(r.worst() <= 1e-4);
}

TEST_CASE("euler single step with a constant field") {
  SeededRng rng(7);
  const Matrix c = SampleGaussianChunk(rng, 16, 3);
  const PolicyNets nets = ConstantField(c);
  const FusedState f = RandomFused(rng);
  IntentEmbedding e = RandomIntent(rng);
  e.born_step = 37;
  SeededRng a(9), noise(9);
  const ActionChunk chunk = EulerSingleStep(nets, a, f, e);
  const Matrix x0 = SampleGaussianChunk(noise, 16, 3);
  CHECK(chunk.actions == x0 + c);
  CHECK(chunk.intent_born_step == 37);
  CHECK(EulerSingleStep(nets, a, f, e).actions != chunk.actions);

  // Constant fields integrate exactly for any step count.
  for (int k : {1, 2, 4, 8}) {
    SeededRng m(10), n(10);
    const Matrix out = MultiStepSolve(nets, m, f, e, k).actions;
    CHECK((out - (SampleGaussianChunk(n, 16, 3) + c)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("single step output minus noise is the raw field at t=0") {
  const PolicyNets nets = SmallNets(11);
  SeededRng rng(12);
  const FusedState f = RandomFused(rng);
  const IntentEmbedding e = RandomIntent(rng);
  SeededRng a(13), b(13);
  const ActionChunk chunk = EulerSingleStep(nets, a, f, e);
  const Matrix x0 = SampleGaussianChunk(b, 16, 3);
  CHECK((chunk.actions - x0 - VfForward(nets, x0, 0.0, f, e)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("one solver step is bit-identical to the single Euler step") {
  const PolicyNets nets = SmallNets(14);
  SeededRng rng(15);
  for (int i = 0; i < 20; ++i) {
    const FusedState f = RandomFused(rng);
    const IntentEmbedding e = RandomIntent(rng);
    SeededRng a(100 + i), b(100 + i);
    CHECK(EulerSingleStep(nets, a, f, e).actions == MultiStepSolve(nets, b, f, e, 1).actions);
  }
  SeededRng a(1);
  const Matrix four = MultiStepSolve(nets, a, RandomFused(rng), RandomIntent(rng), 4).actions;
  CHECK(four.allFinite());
  CHECK_THROWS_AS(MultiStepSolve(nets, a, RandomFused(rng), RandomIntent(rng), 0), ConfigError);
}

struct Tiny {
  std::vector<Episode> episodes;
  MotionNet motion;
};

Tiny TinyData() {
  EnvConfig cfg;
  cfg.raster = RasterMode::kBilinear;
  SeededRng rng(3);
  Tiny t{GenerateDataset(cfg, 12, rng), {}};
  SeededRng mrng(4);
  t.motion = MakeMotionNet(16, 16, 4, 8, mrng);
  return t;
}

PolicyTrainConfig TinyTrain() {
  PolicyTrainConfig tc;
  tc.steps = 300;
  tc.batch_size = 16;
  tc.log_every = 50;
  tc.adam.learning_rate = 3e-3;
  tc.final_lr_fraction = 0.1;
  return tc;
}

TEST_CASE("policy training is deterministic and leaves the motion net alone") {
  const Tiny t = TinyData();
  const TrainingSet set(t.episodes, &t.motion, ChunkingConfig{}, 15);
  auto run = [&] {
    SeededRng rng(5);
    PolicyNets nets = SmallNets(6, ChunkingConfig{}, set.fused_dim());
    const PolicyTrainResult r = TrainPolicy(set, nets, TinyTrain(), rng, &t.motion);
    std::ostringstream os;
    WritePolicy(os, nets, 42);
    return std::pair{r.loss_curve, os.str()};
  };
  const auto [curve_a, text_a] = run();
  const auto [curve_b, text_b] = run();
  REQUIRE(curve_a.size() == 6);
  CHECK(curve_a == curve_b);
  CHECK(text_a == text_b);
  CHECK(curve_a.back() < curve_a.front());
}

TEST_CASE("checkpoints fire on schedule") {
  const Tiny t = TinyData();
  const TrainingSet set(t.episodes, &t.motion, ChunkingConfig{});
  PolicyTrainConfig tc = TinyTrain();
  tc.steps = 60;
  tc.checkpoint_every = 20;
  SeededRng rng(5);
  PolicyNets nets = SmallNets(6, ChunkingConfig{}, set.fused_dim());
  std::vector<int> seen;
  TrainPolicy(set, nets, tc, rng, &t.motion, [&](int step, const PolicyNets&) { seen.push_back(step); });
  CHECK(seen == std::vector<int>{20, 40, 60});
}

TEST_CASE("non-finite loss raises a training error") {
  Tiny t = TinyData();
  for (Episode& ep : t.episodes) {
    for (Action& a : ep.actions) a.dx = std::numeric_limits<double>::quiet_NaN();
  }
  const TrainingSet set(t.episodes, &t.motion, ChunkingConfig{});
  SeededRng rng(5);
  PolicyNets nets = SmallNets(6, ChunkingConfig{}, set.fused_dim());
  CHECK_THROWS_AS(TrainPolicy(set, nets, TinyTrain(), rng, &t.motion), TrainingError);
}

TEST_CASE("training rejects mismatched nets") {
  const Tiny t = TinyData();
  const TrainingSet set(t.episodes, &t.motion, ChunkingConfig{});
  SeededRng rng(5);
  PolicyNets wrong = SmallNets(6, ChunkingConfig{}, 12);
  CHECK_THROWS_AS(TrainPolicy(set, wrong, TinyTrain(), rng), ConfigError);
  PolicyNets nets = SmallNets(6, ChunkingConfig{}, set.fused_dim());
  PolicyTrainConfig tc = TinyTrain();
  tc.final_lr_fraction = 0.0;
  CHECK_THROWS_AS(TrainPolicy(set, nets, tc, rng), ConfigError);
}

TEST_CASE("policy bundle round trip") {
  const PolicyNets nets = SmallNets(16);
  std::stringstream ss;
  WritePolicy(ss, nets, 0xfeedULL);
  std::uint64_t hash = 0;
  const PolicyNets back = ReadPolicy(ss, &hash);
  CHECK(hash == 0xfeedULL);
  CHECK(back.field == nets.field);
  CHECK(back.intent == nets.intent);
  CHECK(back.fused_dim == nets.fused_dim);
  CHECK(back.use_motion == nets.use_motion);
  CHECK(back.chunking.horizon == 16);
  std::stringstream again;
  WritePolicy(again, back, 0xfeedULL);
  std::stringstream first;
  WritePolicy(first, nets, 0xfeedULL);
  CHECK(again.str() == first.str());
  std::stringstream bad("tidal-policy 2\n");
  CHECK_THROWS_AS(ReadPolicy(bad), ConfigError);
}

TEST_CASE("train config canonical string tracks every field") {
  PolicyTrainConfig a, b;
  CHECK(a.Canonical() == b.Canonical());
  b.final_lr_fraction = 0.5;
  CHECK(a.Canonical() != b.Canonical());
  b = a;
  b.alpha = 3.0;
  CHECK(a.Canonical() != b.Canonical());
}

}  // namespace
}  // namespace tidal
