#include <doctest.h>

#include <cmath>
#include <sstream>

#include "tidal/errors.h"
#include "tidal/intent.h"
#include "tidal/motion.h"
#include "tidal/oracle.h"

namespace tidal {
namespace {

TEST_CASE("zero-weight intent net returns its biases") {
  MlpNetwork net({16 * 16 + kTaskTagDim, 8, 4});
  net.layers().back().bias << 1.0, -2.0, 0.5, 0.0;
  EnvConfig cfg;
  SeededRng rng(1);
  for (int i = 0; i < 3; ++i) {
    const IntentEmbedding e = EncodeIntent(net, Rasterize(EnvReset(cfg, rng), cfg), TaskTag::kDynamic);
    CHECK(e.values == net.layers().back().bias);
  }
}

TEST_CASE("intent encoding is deterministic and checks its input width") {
  MlpNetwork net({16 * 16 + kTaskTagDim, 8, 4});
  SeededRng rng(2);
  net.InitializeRandom(rng);
  EnvConfig cfg;
  const GridObs obs = Rasterize(EnvReset(cfg, rng), cfg);
  const IntentEmbedding a = EncodeIntent(net, obs, TaskTag::kStatic);
  const IntentEmbedding b = EncodeIntent(net, obs, TaskTag::kStatic);
  CHECK(a.values == b.values);
  CHECK(a.Checksum() == b.Checksum());
  CHECK(EncodeIntent(net, obs, TaskTag::kDynamic).values != a.values);
  CHECK_THROWS_AS(EncodeIntent(net, GridObs::Zeros(8), TaskTag::kStatic), ConfigError);
}

TEST_CASE("intent input layout") {
  GridObs g = GridObs::Zeros(4);
  g.cells[5] = 0.6;
  const Vector x = IntentInput(g, TaskTag::kStatic);
  CHECK(x.size() == 16 + kTaskTagDim);
  CHECK(x[5] == 0.6);
  CHECK(x[16] == 0.0);
  CHECK(x[17] == 1.0);
}

TEST_CASE("diff_frames examples") {
  EnvConfig cfg;
  SeededRng rng(4);
  WorldState s = EnvReset(cfg, rng);
  const GridObs a = Rasterize(s, cfg);
  CHECK(DiffFrames(a, a).isZero(0.0));

  // Move the target exactly one cell to the right.
  s.target_pos = {0.53, 0.71};
  s.ee_pos = {0.1, 0.1};
  const GridObs before = Rasterize(s, cfg);
  s.target_pos.x() += 1.0 / 16.0;
  const GridObs after = Rasterize(s, cfg);
  const Vector d = DiffFrames(after, before);
  int pos = 0, neg = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    pos += d[i] > 0.0;
    neg += d[i] < 0.0;
  }
  CHECK(pos == 1);
  CHECK(neg == 1);
  CHECK(d.maxCoeff() == doctest::Approx(1.0 / GridObs::kMaxIntensity));
  CHECK(d.minCoeff() == doctest::Approx(-1.0 / GridObs::kMaxIntensity));
  CHECK(d.cwiseAbs().maxCoeff() <= 1.0);
  CHECK_THROWS_AS(DiffFrames(after, GridObs::Zeros(8)), ConfigError);
}

TEST_CASE("diff_frames is antisymmetric") {
  EnvConfig cfg;
  cfg.raster = RasterMode::kBilinear;
  SeededRng rng(5);
  for (int i = 0; i < 20; ++i) {
    const GridObs a = Rasterize(EnvReset(cfg, rng), cfg);
    const GridObs b = Rasterize(EnvReset(cfg, rng), cfg);
    CHECK(DiffFrames(a, b) == -DiffFrames(b, a));
  }
}

TEST_CASE("static world diffs vanish once history is available") {
  EnvConfig cfg;
  cfg.tier = Tier::kStatic;
  const Episode ep = RunOracleEpisode(cfg, 3);
  // The robot moves, so blank out its marker by comparing target-only frames.
  for (int t = 4; t < ep.length(); ++t) {
    WorldState now = ep.states[static_cast<std::size_t>(t)];
    WorldState past = ep.states[static_cast<std::size_t>(t - 4)];
    if (now.held) break;
    now.ee_pos = past.ee_pos = {0.0, 1.0};
    CHECK(DiffFrames(Rasterize(now, cfg), Rasterize(past, cfg)).isZero(0.0));
  }
  CHECK(HistoryFrame(ep, 2, 4).cells == GridObs::Zeros(16).cells);
  CHECK(HistoryFrame(ep, 9, 4).cells == ep.Grid(5).cells);
}

TEST_CASE("zero-weight motion net returns its bottleneck biases") {
  SeededRng rng(1);
  MotionNet net = MakeMotionNet(16, 32, 8, 16, rng);
  for (auto& layer : net.trunk.layers()) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  net.trunk.layers().back().bias.setLinSpaced(8, -1.0, 1.0);
  const MotionOutput out = MotionForward(net, Vector::Random(256));
  CHECK(out.embedding == net.trunk.layers().back().bias);
  CHECK(out.aux.size() == kAuxDim);
  const MotionOutput again = MotionForward(net, Vector::Random(256));
  CHECK(again.embedding == out.embedding);
  CHECK_THROWS_AS(MotionForward(net, Vector::Zero(10)), ConfigError);
}

TEST_CASE("motion forward is deterministic") {
  SeededRng rng(2);
  const MotionNet net = MakeMotionNet(16, 32, 8, 16, rng);
  const Vector diff = Vector::Random(256);
  const MotionOutput a = MotionForward(net, diff);
  const MotionOutput b = MotionForward(net, diff);
  CHECK(a.embedding == b.embedding);
  CHECK(a.aux == b.aux);
}

TEST_CASE("aux loss hand values") {
  AuxTargets t{{0.2, 0.3}, {0.05, 0.0}, {0.21, 0.3}};
  Vector perfect(6);
  perfect << 0.2, 0.3, 0.05, 0.0, 0.21, 0.3;
  CHECK(MotionAuxLoss(perfect, t, {}) == 0.0);

  Vector p_err = perfect;
  p_err[0] += 0.1;
  CHECK(MotionAuxLoss(p_err, t, {1.0, 0.0, 0.0}) == doctest::Approx(0.01).epsilon(1e-12));

  Vector unit = perfect;
  unit[0] += 1.0;
  unit[2] += 1.0;
  unit[4] += 1.0;
  CHECK(MotionAuxLoss(unit, t, {1.0, 1.0, 1.0}) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK_THROWS_AS(MotionAuxLoss(unit, t, {-1.0, 1.0, 1.0}), ConfigError);
  CHECK_THROWS_AS(MotionAuxLoss(Vector::Zero(4), t, {}), ConfigError);
}

TEST_CASE("fuse_state gating") {
  const std::array<double, kProprioDim> prop{0.1, 0.2, 1.0, 0.0};
  const Vector m = Vector::LinSpaced(8, 1.0, 8.0);
  const FusedState open = FuseState(prop, m, 0);
  CHECK(open.values.size() == kProprioDim + 8);
  CHECK(open.values.tail(8) == m);
  CHECK(open.values[1] == 0.2);
  const FusedState closed = FuseState(prop, m, 1);
  for (int i = 0; i < 8; ++i) CHECK(closed.values[kProprioDim + i] == 0.0);
  CHECK(FuseState(prop, Vector::Zero(8), 0).values == FuseState(prop, Vector::Zero(8), 1).values);
  CHECK_THROWS_AS(FuseState(prop, m, 2), ConfigError);
}

TEST_CASE("gate is exactly zero on 10^4 random calls") {
  SeededRng rng(6);
  int violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::array<double, kProprioDim> prop{rng.Uniform(), rng.Uniform(), 1.0, 1.0};
    Vector m(8);
    for (int j = 0; j < 8; ++j) m[j] = 1e6 * rng.Gaussian();
    const FusedState f = FuseState(prop, m, 1);
    for (int j = 0; j < 8; ++j) violations += f.values[kProprioDim + j] != 0.0;
  }
  CHECK(violations == 0);
}

TEST_CASE("aux targets follow the episode") {
  EnvConfig cfg;
  const Episode ep = RunOracleEpisode(cfg, 11);
  const AuxTargets a = AuxTargetsAt(ep, 3, 4);
  CHECK(a.position == ep.states[3].target_pos);
  CHECK(a.velocity == ep.states[3].target_vel);
  CHECK(a.future_position == ep.states[7].target_pos);
  const AuxTargets e = AuxTargetsAt(ep, 3, 4, AuxSubject::kEndEffector);
  CHECK(e.position == ep.states[3].ee_pos);
  CHECK_THROWS_AS(AuxTargetsAt(ep, -1, 4), SamplingError);
}

TEST_CASE("motion training: curve falls and repeats bit for bit") {
  EnvConfig cfg;
  cfg.raster = RasterMode::kBilinear;
  SeededRng data_rng(3);
  const auto eps = GenerateDataset(cfg, 30, data_rng);
  MotionTrainConfig tc;
  tc.epochs = 4;
  tc.batches_per_epoch = 40;
  tc.batch_size = 32;
  auto run = [&] {
    SeededRng rng(8);
    MotionNet net = MakeMotionNet(16, 32, 8, 16, rng, Activation::kRelu);
    return std::pair{TrainMotion(eps, net, tc, rng), net.Checksum()};
  };
  const auto [a, sum_a] = run();
  const auto [b, sum_b] = run();
  REQUIRE(a.epoch_loss.size() == 4);
  CHECK(a.epoch_loss == b.epoch_loss);
  CHECK(sum_a == sum_b);
  for (double l : a.epoch_loss) CHECK(std::isfinite(l));
  CHECK(a.epoch_loss.back() < a.epoch_loss.front());

  SeededRng rng(1);
  MotionNet net = MakeMotionNet(16, 32, 8, 16, rng);
  CHECK_THROWS_AS(TrainMotion({}, net, tc, rng), GenerationError);
}

TEST_CASE("static-only data keeps velocity predictions small") {
  EnvConfig cfg;
  cfg.tier = Tier::kStatic;
  cfg.raster = RasterMode::kBilinear;
  SeededRng data_rng(4);
  const auto eps = GenerateDataset(cfg, 20, data_rng);
  MotionTrainConfig tc;
  tc.epochs = 6;
  tc.batches_per_epoch = 100;
  tc.batch_size = 32;
  tc.adam.learning_rate = 3e-3;
  SeededRng rng(5);
  MotionNet net = MakeMotionNet(16, 32, 8, 16, rng, Activation::kRelu);
  TrainMotion(eps, net, tc, rng);
  double sq = 0.0;
  int n = 0;
  for (const Episode& ep : eps) {
    for (int t = 0; t < ep.length(); ++t) {
      if (ep.states[static_cast<std::size_t>(t)].held) break;
      const MotionOutput out = MotionForward(net, DiffFrames(ep.Grid(t), HistoryFrame(ep, t, net.lag)));
      sq += out.aux.segment<2>(2).squaredNorm();
      ++n;
    }
  }
  CHECK(std::sqrt(sq / n) < 0.5 * cfg.target_speed_min);
}

TEST_CASE("motion net text round trip") {
  SeededRng rng(9);
  const MotionNet net = MakeMotionNet(16, 32, 8, 16, rng, Activation::kRelu);
  std::stringstream ss;
  WriteMotionNet(ss, net);
  const MotionNet back = ReadMotionNet(ss);
  CHECK(back.Checksum() == net.Checksum());
  CHECK(back.lag == net.lag);
}

}  // namespace
}  // namespace tidal
