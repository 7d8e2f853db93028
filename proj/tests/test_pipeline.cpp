#include <fstream>

#include "doctest.h"
#include "dualmem/pipeline.hpp"
#include "dualmem/synth.hpp"
#include "oracles.hpp"

using namespace dualmem;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

RunConfig make_run(const testutil::TempDir& dir, const std::string& eval_prefix = "eval") {
  SynthConfig c;
  c.dim = 24;
  c.n_pos = 200;
  c.n_neg = 400;
  c.n_amb = 30;
  c.n_known_as_unknown = 20;
  c.n_known_stream = 20;
  c.images = 20;
  c.spread = 0.8;
  c.image_prefix = "cal";
  c.seed = 1;
  c.direction_seed = 5;
  write_synth(generate(c), dir / "cal");
  c.image_prefix = eval_prefix;
  c.seed = 2;
  write_synth(generate(c), dir / "eval");

  RunConfig cfg;
  auto split = [&](const std::string& name) {
    return SplitPaths{dir / name / "proposals.jsonl", dir / name / "groundtruth.jsonl", dir / name / "embeddings.bin"};
  };
  cfg.calibration = split("cal");
  cfg.evaluation = split("eval");
  cfg.output_dir = dir / "out";
  cfg.sweep_alphas = {0.05, 0.1, 0.2};
  return cfg;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("end to end on synthetic data") {
  testutil::TempDir dir("pipeline");
  auto cfg = make_run(dir);
  auto r = run_pipeline(cfg);
  CHECK(r.memory_positive + r.threshold_positive == 200);
  CHECK(r.memory_negative == 400);
  CHECK(r.raw.raw.pos == 200);
  CHECK(r.filtered.fupi < r.raw.fupi);
  // Realized NMH within three binomial sigmas of the target.
  const double sigma = std::sqrt(cfg.alpha * (1 - cfg.alpha) / static_cast<double>(r.raw.raw.pos));
  CHECK(*r.filtered.nmh <= cfg.alpha + 3 * sigma);
  CHECK(r.sweep.size() == 3);
  for (const char* f : {"config.resolved.json", "calibration_labels.jsonl", "calibration_decomposition.json",
                        "memory.dmm", "calibration.json", "decisions.jsonl", "sweep.csv", "report.json"})
    CHECK(std::filesystem::exists(cfg.output_dir / f));
  auto report = slurp(cfg.output_dir / "report.json");
  CHECK(report.find("\"fupi_reduction\"") != std::string::npos);
  CHECK(report.find("\"realized_nmh\"") != std::string::npos);
}

TEST_CASE("reruns are byte-identical") {
  testutil::TempDir dir("pipeline");
  auto cfg = make_run(dir);
  run_pipeline(cfg);
  const auto first = slurp(cfg.output_dir / "decisions.jsonl");
  const auto first_report = slurp(cfg.output_dir / "report.json");
  cfg.threads = 3;
  run_pipeline(cfg);
  CHECK(slurp(cfg.output_dir / "decisions.jsonl") == first);
  CHECK(slurp(cfg.output_dir / "report.json") == first_report);
}

TEST_CASE("overlapping image ids between splits are rejected by name") {
  testutil::TempDir dir("pipeline");
  auto cfg = make_run(dir, "cal");
  CHECK_THROWS_WITH_AS(run_pipeline(cfg), doctest::Contains("image 'cal0'"), Error);
}

TEST_CASE("stage errors name the stage") {
  testutil::TempDir dir("pipeline");
  auto cfg = make_run(dir);
  cfg.evaluation.embeddings = dir / "missing.bin";
  CHECK_THROWS_WITH_AS(run_pipeline(cfg), doctest::Contains("stage 'ingest-evaluation'"), Error);
}

TEST_CASE("config JSON round trip and relative paths") {
  const std::string text = R"({
    "calibration": {"proposals": "c/p.jsonl", "groundtruth": "c/g.jsonl", "embeddings": "c/e.bin"},
    "evaluation": {"proposals": "/abs/p.jsonl", "groundtruth": "e/g.jsonl", "embeddings": "e/e.bin"},
    "k": 10, "temperature": 0.1, "alpha": 0.2, "sweep_alphas": [0.1, 0.3]
  })";
  auto c = run_config_from_json(text, "/base");
  CHECK(c.calibration.proposals == std::filesystem::path("/base/c/p.jsonl"));
  CHECK(c.evaluation.proposals == std::filesystem::path("/abs/p.jsonl"));
  CHECK(c.params.k == 10);
  CHECK(c.alpha == 0.2);
  auto again = run_config_from_json(run_config_to_json(c));
  CHECK(run_config_to_json(again) == run_config_to_json(c));
  CHECK_THROWS_AS(run_config_from_json(R"({"calibration": {}})"), Error);
  CHECK_THROWS_AS(run_config_from_json("{"), Error);
}

}  // TEST_SUITE
