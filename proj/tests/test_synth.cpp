#include <random>

#include "doctest.h"
#include "dualmem/io.hpp"
#include "dualmem/labeling.hpp"
#include "dualmem/probe.hpp"
#include "dualmem/synth.hpp"
#include "oracles.hpp"

using namespace dualmem;

TEST_SUITE("synth") {

TEST_CASE("every proposal receives its intended label") {
  SynthConfig c;
  c.n_pos = 150;
  c.n_neg = 200;
  c.n_known_as_unknown = 40;
  c.n_amb = 60;
  c.n_known_stream = 30;
  c.n_missed_future = 20;
  c.images = 7;
  c.seed = 3;
  auto d = generate(c);
  auto lp = label_unknown_stream(d.proposals, d.groundtruth);
  std::size_t j = 0;
  LabelCounts counts;
  for (std::size_t i = 0; i < d.proposals.size(); ++i) {
    if (d.proposals[i].stream != Stream::unknown) {
      CHECK_FALSE(d.intended[i].has_value());
      continue;
    }
    REQUIRE(d.intended[i].has_value());
    CHECK(lp[j].label == *d.intended[i]);
    ++counts[lp[j].label];
    ++j;
  }
  CHECK(counts.pos == 150);
  CHECK(counts.neg == 200);
  CHECK(counts.known_as_unknown == 40);
  CHECK(counts.amb == 60);
}

TEST_CASE("generation is deterministic in the seed") {
  SynthConfig c;
  c.pos_modes = 3;
  c.hard_negative_fraction = 0.3;
  auto a = generate(c), b = generate(c);
  CHECK(a.proposals == b.proposals);
  CHECK(a.groundtruth == b.groundtruth);
  CHECK(a.embeddings == b.embeddings);
  c.seed = 1;
  CHECK_FALSE(generate(c).embeddings == a.embeddings);
}

TEST_CASE("written files pass ingestion") {
  testutil::TempDir dir("synth");
  SynthConfig c;
  c.n_known_stream = 5;
  auto d = generate(c);
  write_synth(d, dir.path());
  auto ps = load_proposals(dir / "proposals.jsonl");
  auto gt = load_groundtruth(dir / "groundtruth.jsonl");
  auto emb = load_embeddings(dir / "embeddings.bin");
  CHECK(ps == d.proposals);
  CHECK(gt == d.groundtruth);
  CHECK(emb == d.embeddings);
  CHECK_NOTHROW(validate_embedding_refs(ps, emb, true));
}

TEST_CASE("impossible geometry and bad settings are rejected") {
  SynthConfig c;
  c.images = 1;
  c.n_pos = 60;
  c.n_neg = 41;
  CHECK_THROWS_WITH_AS(generate(c), doctest::Contains("impossible geometry"), Error);
  c.n_neg = 40;
  CHECK_NOTHROW(generate(c));
  SynthConfig bad;
  bad.hard_negative_fraction = 1.5;
  CHECK_THROWS_AS(generate(bad), Error);
}

TEST_CASE("config JSON round trip") {
  SynthConfig c;
  c.dim = 48;
  c.pos_modes = 4;
  c.hard_negative_cos = 0.7;
  c.neg_objectness = {0.2, 0.4};
  c.image_prefix = "x";
  auto back = synth_config_from_json(synth_config_to_json(c));
  CHECK(synth_config_to_json(back) == synth_config_to_json(c));
  CHECK(back.dim == 48);
  CHECK(back.neg_objectness.hi == 0.4);
}

TEST_CASE("hard negatives sit at the requested cosine from a positive mode") {
  SynthConfig c;
  c.dim = 64;
  c.n_pos = 50;
  c.n_neg = 50;
  c.spread = 0.0;
  c.hard_negative_fraction = 1.0;
  c.hard_negative_cos = 0.85;
  auto d = generate(c);
  std::size_t pos_row = 0, neg_row = 0;
  for (std::size_t i = 0; i < d.proposals.size(); ++i) {
    if (d.intended[i] == Label::pos) pos_row = *d.proposals[i].embedding_index;
    if (d.intended[i] == Label::neg) neg_row = *d.proposals[i].embedding_index;
  }
  CHECK(dot(d.embeddings.row(pos_row), d.embeddings.row(neg_row)) == doctest::Approx(0.85).epsilon(1e-5));
}

TEST_CASE("orthogonal class directions are perfectly separable") {
  SynthConfig c;
  c.dim = 32;
  c.n_pos = 10;
  c.n_neg = 10;
  c.spread = 0.01;
  auto d = generate(c);
  auto lp = label_unknown_stream(d.proposals, d.groundtruth);
  LabelCounts counts;
  for (const auto& x : lp) ++counts[x.label];
  CHECK(counts.pos == 10);
  CHECK(counts.neg == 10);
  auto r = run_probe(lp, d.embeddings);
  CHECK(r.skipped_folds.empty());
  CHECK(r.mean_auroc == 1.0);
}

TEST_CASE("a shared class direction leaves nothing to separate") {
  SynthConfig c;
  c.dim = 32;
  c.n_pos = 500;
  c.n_neg = 500;
  c.images = 50;
  c.shared_direction = true;
  c.seed = 8;
  auto d = generate(c);
  auto r = run_probe(label_unknown_stream(d.proposals, d.groundtruth), d.embeddings);
  CHECK(std::abs(r.mean_auroc - 0.5) <= 0.05);
}

}  // TEST_SUITE
