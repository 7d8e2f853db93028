#include <random>
#include <set>

#include "doctest.h"
#include "dualmem/memory.hpp"
#include "oracles.hpp"

using namespace dualmem;

namespace {

std::vector<LabeledProposal> labeled(const std::vector<Label>& labels) {
  std::vector<LabeledProposal> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    LabeledProposal lp;
    lp.proposal = testutil::proposal("p" + std::to_string(i), "img", {0, 0, 1, 1}, Stream::unknown, i);
    lp.label = labels[i];
    out.push_back(lp);
  }
  return out;
}

DualMemory two_sided(EmbeddingMatrix pos, EmbeddingMatrix neg) {
  DualMemory m;
  m.positive = std::move(pos);
  m.negative = std::move(neg);
  return m;
}

}  // namespace

TEST_SUITE("memory") {

TEST_CASE("log-density worked examples") {
  auto q = testutil::from_rows(4, {{1, 0, 0, 0}});
  CHECK(knn_logdensity(q.row(0), q, {1, 0.05}) == doctest::Approx(20.0).epsilon(1e-12));
  auto ortho = testutil::from_rows(4, {{0, 1, 0, 0}});
  CHECK(knn_logdensity(q.row(0), ortho, {1, 1.0}) == doctest::Approx(0.0));
  // Two neighbors at cos 1 and 0, T = 1: log((e + 1) / 2).
  auto two = testutil::from_rows(4, {{1, 0, 0, 0}, {0, 0, 1, 0}});
  CHECK(knn_logdensity(q.row(0), two, {5, 1.0}) == doctest::Approx(std::log((std::exp(1.0) + 1.0) / 2.0)));
}

TEST_CASE("lambda worked examples") {
  auto q = testutil::from_rows(2, {{1, 0}});
  // Query on a positive, orthogonal to the only negative.
  auto mem = two_sided(testutil::from_rows(2, {{1, 0}}), testutil::from_rows(2, {{0, 1}}));
  CHECK(lrt_score(q.row(0), mem, {1, 0.05}) == doctest::Approx(-20.0).epsilon(1e-12));
  // Mirror-image memories give lambda 0.
  auto sym = two_sided(testutil::from_rows(2, {{1, 0}}), testutil::from_rows(2, {{1, 0}}));
  CHECK(lrt_score(q.row(0), sym, {3, 0.1}) == 0.0);
}

TEST_CASE("k at least |M| equals the full-memory oracle") {
  std::mt19937_64 rng(2);
  auto mem = testutil::random_unit_rows(7, 16, rng);
  auto qs = testutil::random_unit_rows(20, 16, rng);
  for (std::size_t i = 0; i < qs.count(); ++i)
    for (std::size_t k : {7u, 8u, 100u})
      CHECK(knn_logdensity(qs.row(i), mem, {k, 0.05}) ==
            doctest::Approx(oracle::knn_logdensity(qs.row(i), mem, 7, 0.05)).epsilon(1e-12));
}

TEST_CASE("matches the oracle for k < |M|") {
  std::mt19937_64 rng(3);
  auto mem = testutil::random_unit_rows(300, 32, rng);
  auto qs = testutil::random_unit_rows(50, 32, rng);
  for (std::size_t i = 0; i < qs.count(); ++i)
    for (double t : {0.01, 0.05, 1.0})
      CHECK(std::abs(knn_logdensity(qs.row(i), mem, {25, t}) - oracle::knn_logdensity(qs.row(i), mem, 25, t)) <= 1e-6);
}

TEST_CASE("bounds: max/T - log k' <= density <= max/T") {
  std::mt19937_64 rng(4);
  auto mem = testutil::random_unit_rows(60, 8, rng);
  auto qs = testutil::random_unit_rows(100, 8, rng);
  for (std::size_t i = 0; i < qs.count(); ++i) {
    for (std::size_t k : {1u, 10u, 25u, 80u}) {
      const double t = 0.05;
      const double top = oracle::max_cosine(qs.row(i), mem) / t;
      const double kk = static_cast<double>(std::min<std::size_t>(k, 60));
      const double d = knn_logdensity(qs.row(i), mem, {k, t});
      CHECK(d <= top + 1e-9);
      CHECK(d >= top - std::log(kk) - 1e-9);
      CHECK(d <= 1.0 / t + 1e-9);
    }
  }
}

TEST_CASE("sign collapses to nearest-neighbor comparison as T -> 0") {
  std::mt19937_64 rng(5);
  auto pos = testutil::random_unit_rows(40, 8, rng);
  auto neg = testutil::random_unit_rows(40, 8, rng);
  auto mem = two_sided(pos, neg);
  auto qs = testutil::random_unit_rows(400, 8, rng);
  int checked = 0;
  for (std::size_t i = 0; i < qs.count(); ++i) {
    const double gap = oracle::max_cosine(qs.row(i), neg) - oracle::max_cosine(qs.row(i), pos);
    if (std::abs(gap) < 1e-2) continue;
    ++checked;
    const double lam = lrt_score(qs.row(i), mem, {5, 1e-3});
    CHECK((lam > 0) == (gap > 0));
  }
  CHECK(checked > 300);
}

TEST_CASE("scores are deterministic under ties and thread counts") {
  // Many duplicate rows: every neighbor choice ties.
  auto dup = testutil::from_rows(3, {{1, 0, 0}, {1, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 1, 0}});
  std::mt19937_64 rng(6);
  auto qs = testutil::random_unit_rows(64, 3, rng);
  auto mem = two_sided(dup, testutil::from_rows(3, {{0, 1, 0}, {0, 0, 1}, {0, 0, 1}}));
  auto a = lrt_scores(qs, mem, {2, 0.05}, 1);
  auto b = lrt_scores(qs, mem, {2, 0.05}, 4);
  auto c = lrt_scores(qs, mem, {2, 0.05}, 1);
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("adding a closer negative never lowers lambda") {
  std::mt19937_64 rng(7);
  auto pos = testutil::random_unit_rows(30, 8, rng);
  auto neg = testutil::random_unit_rows(30, 8, rng);
  auto qs = testutil::random_unit_rows(50, 8, rng);
  const LrtParams p{10, 0.05};
  for (std::size_t i = 0; i < qs.count(); ++i) {
    auto before = lrt_score(qs.row(i), two_sided(pos, neg), p);
    auto more = neg;
    more.append(qs.row(i));  // a negative identical to the query
    auto after = lrt_score(qs.row(i), two_sided(pos, more), p);
    CHECK(after >= before);
  }
}

TEST_CASE("build_memory splits positives disjointly and deterministically") {
  std::vector<Label> labels(10, Label::pos);
  labels.insert(labels.end(), {Label::neg, Label::neg, Label::amb, Label::known_as_unknown});
  auto lp = labeled(labels);
  std::mt19937_64 rng(8);
  auto emb = testutil::random_unit_rows(lp.size(), 6, rng);

  auto m = build_memory(lp, emb, 0.5, 42);
  CHECK(m.positive.count() == 5);
  CHECK(m.threshold_positives.count() == 5);
  CHECK(m.negative.count() == 2);

  std::set<std::vector<float>> seen;
  for (const auto* part : {&m.positive, &m.threshold_positives})
    for (std::size_t i = 0; i < part->count(); ++i) seen.insert({part->row(i).begin(), part->row(i).end()});
  CHECK(seen.size() == 10);

  auto again = build_memory(lp, emb, 0.5, 42);
  CHECK(again.positive == m.positive);
  CHECK(again.threshold_positives == m.threshold_positives);
  auto other = build_memory(lp, emb, 0.5, 43);
  CHECK((other.positive != m.positive || other.threshold_positives != m.threshold_positives));
}

TEST_CASE("build_memory preconditions") {
  std::mt19937_64 rng(9);
  auto emb = testutil::random_unit_rows(4, 6, rng);
  CHECK_THROWS_WITH_AS(build_memory(labeled({Label::pos, Label::neg}), emb), doctest::Contains("at least 2"), Error);
  CHECK_THROWS_WITH_AS(build_memory(labeled({Label::pos, Label::pos, Label::amb}), emb),
                       doctest::Contains("no calibration negatives"), Error);
  CHECK_THROWS_AS(build_memory(labeled({Label::pos, Label::pos, Label::neg}), emb, 1.0), Error);
}

TEST_CASE("subset size is rounded and keeps both sides nonempty") {
  CHECK(memory_subset_size(10, 0.5) == 5);
  CHECK(memory_subset_size(2, 0.01) == 1);
  CHECK(memory_subset_size(2, 0.99) == 1);
  CHECK(memory_subset_size(7, 0.5) == 4);
  for (std::size_t n = 2; n < 50; ++n)
    for (double f : {0.1, 0.3, 0.5, 0.9}) {
      auto s = memory_subset_size(n, f);
      CHECK(s >= 1);
      CHECK(s <= n - 1);
    }
}

TEST_CASE("fusion") {
  std::mt19937_64 rng(10);
  auto a = testutil::random_unit_rows(20, 768, rng);
  auto b = testutil::random_unit_rows(20, 256, rng);
  auto c = fuse_embeddings(a, b, FusionMode::concat);
  CHECK(c.dim() == 1024);
  CHECK(c.count() == 20);
  for (std::size_t i = 0; i < c.count(); ++i) CHECK(std::abs(l2_norm(c.row(i)) - 1.0) <= 1e-6);

  auto self = fuse_embeddings(a, a, FusionMode::average);
  for (std::size_t i = 0; i < a.count(); ++i)
    for (std::size_t j = 0; j < a.dim(); ++j) CHECK(std::abs(self.row(i)[j] - a.row(i)[j]) <= 1e-6);

  auto x = testutil::random_unit_rows(100, 64, rng);
  auto y = testutil::random_unit_rows(100, 64, rng);
  auto avg = fuse_embeddings(x, y, FusionMode::average);
  for (std::size_t i = 0; i < avg.count(); ++i) CHECK(std::abs(l2_norm(avg.row(i)) - 1.0) <= 1e-6);

  CHECK_THROWS_WITH_AS(fuse_embeddings(a, testutil::random_unit_rows(3, 256, rng), FusionMode::concat),
                       doctest::Contains("row count mismatch"), Error);
  CHECK_THROWS_WITH_AS(fuse_embeddings(a, b, FusionMode::average), doctest::Contains("equal dims"), Error);
  CHECK(fusion_mode_from_string("concat") == FusionMode::concat);
  CHECK_THROWS_AS(fusion_mode_from_string("sum"), Error);
}

TEST_CASE("memory file round trip") {
  testutil::TempDir dir("memory");
  std::mt19937_64 rng(11);
  DualMemory m;
  m.positive = testutil::random_unit_rows(5, 12, rng);
  m.negative = testutil::random_unit_rows(9, 12, rng);
  m.threshold_positives = testutil::random_unit_rows(4, 12, rng);
  m.provenance = {"cal-A", 0.4, 77};
  save_memory(m, dir / "m.dmm");
  auto back = load_memory(dir / "m.dmm");
  CHECK(back.positive == m.positive);
  CHECK(back.negative == m.negative);
  CHECK(back.threshold_positives == m.threshold_positives);
  CHECK(back.provenance.split_id == "cal-A");
  CHECK(back.provenance.split_fraction == 0.4);
  CHECK(back.provenance.seed == 77);
}

TEST_CASE("log_sum_exp is stable") {
  std::vector<double> big{1000.0, 1000.0};
  CHECK(log_sum_exp(big) == doctest::Approx(1000.0 + std::log(2.0)));
  std::vector<double> small{-1000.0};
  CHECK(log_sum_exp(small) == -1000.0);
}

TEST_CASE("parameter and shape validation") {
  auto m = testutil::from_rows(2, {{1, 0}});
  auto q = testutil::from_rows(3, {{1, 0, 0}});
  CHECK_THROWS_AS(knn_logdensity(q.row(0), m, {}), Error);
  CHECK_THROWS_AS(knn_logdensity(m.row(0), m, {0, 0.05}), Error);
  CHECK_THROWS_AS(knn_logdensity(m.row(0), m, {1, 0.0}), Error);
}

}  // TEST_SUITE
