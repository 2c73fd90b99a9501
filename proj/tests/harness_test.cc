#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tidal/errors.h"
#include "tidal/harness.h"

namespace tidal {
namespace {

namespace fs = std::filesystem;

PipelineConfig TinyConfig() {
  Json j = Json::parse(R"({
    "dynamic_episodes": 12, "static_episodes": 4,
    "motion_arch": {"hidden": 16, "embedding_dim": 8, "head_hidden": 8},
    "motion_train": {"epochs": 2, "batches_per_epoch": 10, "batch_size": 16},
    "policy_arch": {"intent_hidden": 16, "intent_dim": 8, "field_hidden": 32},
    "tidal_train": {"steps": 30, "batch_size": 8, "log_every": 10},
    "baseline_train": {"steps": 30, "batch_size": 8, "log_every": 10},
    "eval_episodes": 4, "sweep_w": [2.0], "sweep_alpha": [5.0], "sweep_budget": 0.5,
    "lifespans": [28, 56]
  })");
  return PipelineConfigFromJson(j);
}

fs::path TempDir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("tidal_harness_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string TableText(const ResultsTable& t) {
  std::ostringstream os;
  t.WriteRecords(os);
  return os.str();
}

TEST_CASE("config json round trip and key checks") {
  const PipelineConfig c = TinyConfig();
  const PipelineConfig back = PipelineConfigFromJson(ToJson(c));
  CHECK(back.Canonical() == c.Canonical());
  CHECK(back.Hash() == c.Hash());
  CHECK(ToJson(back).dump() == ToJson(c).dump());

  CHECK_THROWS_AS(PipelineConfigFromJson(Json::parse(R"({"sed": 1})")), UsageError);
  CHECK_THROWS_AS(PipelineConfigFromJson(Json::parse(R"({"env": {"gras_radius": 0.1}})")), UsageError);
  CHECK_THROWS_AS(PipelineConfigFromJson(Json::parse(R"({"action_pad": 16})")), UsageError);
  CHECK_THROWS_AS(PipelineConfigFromJson(Json::parse(R"({"eval_episodes": 0})")), UsageError);
  CHECK_THROWS_AS(PipelineConfigFromJson(Json::parse("[1, 2]")), UsageError);
  CHECK_THROWS_AS(LoadPipelineConfig("/nonexistent/tidal.json"), UsageError);

  // Evaluation-only fields do not move the artifact hash.
  PipelineConfig e = c;
  e.eval_episodes = 99;
  e.lifespans = {28};
  CHECK(e.Hash() == c.Hash());
  e.seed = c.seed + 1;
  CHECK(e.Hash() != c.Hash());
}

TEST_CASE("baseline training defaults") {
  const PipelineConfig c;
  const PolicyTrainConfig b = TrainConfigFor(c, ControllerKind::kBaseline);
  CHECK(b.alpha == 1.0);
  CHECK(b.first_weight == 1.0);
  CHECK(b.stages == 1);
  const PolicyTrainConfig t = TrainConfigFor(c, ControllerKind::kTidal);
  CHECK(t.alpha == 5.0);
  CHECK(t.first_weight == 2.0);
  CHECK(t.stages == 4);
}

TEST_CASE("wilson interval") {
  // p = 0.5, n = 100: z * sqrt(0.0025 + z^2/40000) / (1 + z^2/100).
  const double z = 1.959963984540054;
  const double expect = z * std::sqrt(0.0025 + z * z / 40000.0) / (1.0 + z * z / 100.0);
  CHECK(WilsonHalfwidth(50, 100) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(WilsonHalfwidth(0, 10) > 0.0);
  CHECK(WilsonHalfwidth(0, 200) < WilsonHalfwidth(0, 20));
  CHECK_THROWS_AS(WilsonHalfwidth(1, 0), AnalysisError);
}

TEST_CASE("spearman rank correlation") {
  CHECK(SpearmanRho({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(SpearmanRho({1, 2, 3, 4}, {9, 4, 1, 0}) == doctest::Approx(-1.0));
  // Ties take average ranks: x ranks (1,2,3,4), y ranks (1.5,1.5,3,4).
  const double rho = SpearmanRho({1, 2, 3, 4}, {5, 5, 6, 7});
  CHECK(rho == doctest::Approx(4.5 / std::sqrt(5.0 * 4.5)));
  CHECK(SpearmanRho({1, 2}, {3, 3}) == 0.0);
  CHECK_THROWS_AS(SpearmanRho({1}, {1}), AnalysisError);
  CHECK_THROWS_AS(SpearmanRho({1, 2}, {1, 2, 3}), AnalysisError);
}

TEST_CASE("results table") {
  ResultsTable t("demo");
  ResultRow r;
  r.key = "tidal/easy/paused";
  r.episodes = 10;
  r.successes = 4;
  r.success_rate = 0.4;
  t.Add(r);
  CHECK(t.Find("tidal/easy/paused").successes == 4);
  CHECK_THROWS_AS(t.Add(r), AnalysisError);
  CHECK_THROWS_AS(t.Find("nope"), AnalysisError);
  const std::string rec = TableText(t);
  CHECK(rec.rfind("table\tkey\t", 0) == 0);
  CHECK(rec.find("demo\ttidal/easy/paused\ttidal\teasy\tpaused") != std::string::npos);
}

TEST_CASE("episode seeds and experiment validation") {
  CHECK(EpisodeSeed(1, 0) != EpisodeSeed(1, 1));
  CHECK(EpisodeSeed(1, 3) == EpisodeSeed(1, 3));
  ExperimentSpec s;
  s.n_episodes = 0;
  CHECK_THROWS_AS(s.Validate(), ConfigError);
  s.n_episodes = 5;
  s.modes.clear();
  CHECK_THROWS_AS(s.Validate(), ConfigError);
}

TEST_CASE("tiny pipeline is cached and bit-reproducible") {
  const PipelineConfig cfg = TinyConfig();
  const fs::path a = TempDir("a"), b = TempDir("b");
  const Pipeline pa = RunPipeline(cfg, a);
  const Pipeline pb = RunPipeline(cfg, b);
  CHECK(pa.motion_hash == pb.motion_hash);
  for (ControllerKind k : LearnedKinds()) {
    CAPTURE(ControllerKindName(k));
    CHECK(pa.CheckpointHash(k) == pb.CheckpointHash(k));
    CHECK(pa.policies.at(k).loss_curve == pb.policies.at(k).loss_curve);
  }
  for (const char* f : {"motion.txt", "policy_tidal.txt", "policy_baseline.txt"}) {
    std::ifstream fa(PipelineDir(cfg, a) / f), fb(PipelineDir(cfg, b) / f);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    CHECK(!sa.str().empty());
    CHECK(sa.str() == sb.str());
  }

  // A reload reads the same checkpoints and regenerates the same data.
  const Pipeline pc = LoadPipeline(cfg, a);
  CHECK(pc.motion_hash == pa.motion_hash);
  CHECK(pc.CheckpointHash(ControllerKind::kTidal) == pa.CheckpointHash(ControllerKind::kTidal));
  CHECK(pc.dynamic_episodes.size() == pa.dynamic_episodes.size());
  CHECK(pc.dynamic_episodes[3].actions.size() == pa.dynamic_episodes[3].actions.size());
  CHECK_THROWS_AS(LoadPipeline(cfg, TempDir("empty")), ConfigError);

  const ExperimentSpec spec = DefaultSpec(cfg, "eval");
  CHECK(TableText(EvalSuccessRate(pa, spec)) == TableText(EvalSuccessRate(pc, spec)));

  const ResultsTable ablation = AblationSuite(pa, spec);
  CHECK(ablation.rows().size() == 4);
  const ResultsTable proto = PausedVsNonpaused(pa, spec);
  for (const auto& row : proto.rows()) {
    if (row.protocol == Protocol::kPaused) CHECK(row.retention == 1.0);
  }
  const ResultsTable life = LifespanSweep(pa, spec);
  CHECK(life.rows().size() == 2);
  CHECK(life.rows()[0].axis == "l");
  CHECK(TableText(life) == TableText(LifespanSweep(pc, spec)));

  const ResultsTable sweep = HyperparamSweep(pa, spec);
  CHECK(TableText(sweep) == TableText(HyperparamSweep(pc, spec)));

  fs::remove_all(a);
  fs::remove_all(b);
}

}  // namespace
}  // namespace tidal
