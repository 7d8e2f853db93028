#include <random>

#include "doctest.h"
#include "dualmem/metrics.hpp"
#include "oracles.hpp"

using namespace dualmem;

namespace {

LabelCounts counts(std::size_t pos, std::size_t neg) {
  LabelCounts c;
  c.pos = pos;
  c.neg = neg;
  return c;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("count-level worked examples") {
  CHECK(fupi(counts(0, 3), 2) == 1.5);
  CHECK(*suppression_gain(counts(0, 10), counts(0, 4)) == doctest::Approx(0.6));
  CHECK_FALSE(suppression_gain(counts(5, 0), counts(5, 0)).has_value());
  CHECK(*suppression_gain(counts(0, 10), counts(0, 10)) == 0.0);
  CHECK(*nmh(counts(10, 0), counts(9, 0)) == doctest::Approx(0.1));
  CHECK_FALSE(nmh(counts(0, 3), counts(0, 1)).has_value());
  CHECK(*udp(counts(1, 3)) == 0.25);
  CHECK(*udp(counts(4, 0)) == 1.0);
  CHECK_FALSE(udp(counts(0, 0)).has_value());
  CHECK_THROWS_AS(fupi(counts(0, 1), 0), Error);
}

TEST_CASE("u-recall worked example and oracle") {
  std::vector<GroundTruthBox> gt{{"a", {0, 0, 10, 10}, Category::future},
                                 {"a", {50, 50, 60, 60}, Category::future},
                                 {"b", {0, 0, 10, 10}, Category::future},
                                 {"b", {20, 20, 30, 30}, Category::known}};
  std::vector<ProposalRecord> kept{testutil::proposal("1", "a", {0, 0, 10, 11}),
                                   testutil::proposal("2", "b", {1, 0, 10, 10}),
                                   testutil::proposal("3", "a", {0, 0, 10, 10}, Stream::known),
                                   testutil::proposal("4", "b", {50, 50, 60, 60})};
  CHECK(*u_recall(kept, gt) == doctest::Approx(2.0 / 3.0));
  CHECK(*u_recall(kept, gt) == oracle::u_recall(kept, gt));
  CHECK_FALSE(u_recall(kept, std::vector<GroundTruthBox>{}).has_value());

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 80), s(5, 30);
  for (int t = 0; t < 100; ++t) {
    std::vector<GroundTruthBox> g;
    std::vector<ProposalRecord> p;
    for (int i = 0; i < 12; ++i) {
      const double x = u(rng), y = u(rng);
      g.push_back({"i" + std::to_string(i % 3), {x, y, x + s(rng), y + s(rng)},
                   i % 4 ? Category::future : Category::known});
    }
    for (int i = 0; i < 30; ++i) {
      const double x = u(rng), y = u(rng);
      p.push_back(testutil::proposal(std::to_string(i), "i" + std::to_string(i % 3), {x, y, x + s(rng), y + s(rng)}));
    }
    CHECK(*u_recall(p, g) == oracle::u_recall(p, g));
  }
}

TEST_CASE("auroc worked examples") {
  std::vector<double> pos{3, 4}, neg{1, 2};
  CHECK(auroc(pos, neg) == 1.0);
  std::vector<double> tie{1, 1};
  CHECK(auroc(tie, tie) == 0.5);
  std::vector<double> p2{0.9, 0.3}, n2{0.5, 0.1};
  CHECK(auroc(p2, n2) == 0.75);
  CHECK(oracle::pairwise_auroc(p2, n2) == 0.75);
  CHECK_THROWS_AS(auroc(pos, std::vector<double>{}), Error);
}

TEST_CASE("auroc equals the pairwise oracle exactly") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    const std::size_t np = 1 + rng() % 60, nn = 1 + rng() % 60;
    std::vector<double> p(np), n(nn);
    for (double& v : p) v = static_cast<double>(rng() % (t % 3 == 0 ? 3 : 1000));
    for (double& v : n) v = static_cast<double>(rng() % (t % 3 == 0 ? 3 : 1000));
    CHECK(auroc(p, n) == oracle::pairwise_auroc(p, n));
  }
}

TEST_CASE("auroc is invariant under strictly increasing transforms") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  std::vector<double> p(80), n(90);
  for (double& v : p) v = g(rng) + 0.5;
  for (double& v : n) v = g(rng);
  auto tp = p, tn = n;
  for (double& v : tp) v = std::exp(v) * 3 + 1;
  for (double& v : tn) v = std::exp(v) * 3 + 1;
  CHECK(auroc(p, n) == auroc(tp, tn));
}

TEST_CASE("overlap coefficient") {
  std::vector<double> a{0, 1, 2, 3}, b{10, 11, 12, 13};
  CHECK(overlap_coefficient(a, a) == doctest::Approx(1.0));
  CHECK(overlap_coefficient(a, b) == 0.0);
  std::vector<double> c{0, 0, 1, 1}, d{0, 0, 0, 0};
  // Two bins' worth of mass at 0 shared; half of c sits at 1.
  CHECK(overlap_coefficient(c, d) == doctest::Approx(0.5));
  std::vector<double> e{0, 1}, f{0, 2};
  CHECK(overlap_coefficient(e, f) == doctest::Approx(0.5));
  std::vector<double> flat{7, 7};
  CHECK(overlap_coefficient(flat, flat) == 1.0);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  std::vector<double> x(500), y(500);
  for (double& v : x) v = g(rng);
  for (double& v : y) v = g(rng) + 1.0;
  const double o = overlap_coefficient(x, y);
  CHECK(o >= 0.0);
  CHECK(o <= 1.0);
  CHECK(o == overlap_coefficient(y, x));
}

TEST_CASE("evaluate: raw stream versus decisions") {
  std::vector<ProposalRecord> ps{testutil::proposal("pos", "a", {0, 0, 10, 10}),
                                 testutil::proposal("neg1", "a", {50, 50, 60, 60}),
                                 testutil::proposal("neg2", "b", {50, 50, 60, 60}),
                                 testutil::proposal("kn", "b", {0, 0, 10, 10}, Stream::known)};
  std::vector<GroundTruthBox> gt{{"a", {0, 0, 10, 10}, Category::future}};
  auto raw = evaluate(ps, gt, nullptr, 2);
  CHECK(raw.fupi == 1.0);
  CHECK(raw.raw.pos == 1);
  CHECK(raw.raw.neg == 2);
  CHECK(*raw.sg == 0.0);
  CHECK(*raw.u_recall == 1.0);

  std::vector<FilterDecision> d(4);
  for (std::size_t i = 0; i < 4; ++i) d[i].id = ps[i].id;
  d[1].suppressed = true;
  auto f = evaluate(ps, gt, &d, 2);
  CHECK(f.fupi == 0.5);
  CHECK(*f.sg == 0.5);
  CHECK(*f.nmh == 0.0);
  CHECK(*f.udp == 0.5);

  d.pop_back();
  d.erase(d.begin());
  CHECK_THROWS_WITH_AS(evaluate(ps, gt, &d, 2), doctest::Contains("no decision"), Error);
}

TEST_CASE("retaining a subset never raises fupi and never lowers nmh") {
  std::mt19937_64 rng(5);
  std::vector<LabeledProposal> lp(300);
  for (auto& x : lp) x.label = static_cast<Label>(rng() % 4);
  std::vector<bool> keep(lp.size(), true);
  MetricsReport prev = evaluate_labeled(lp, keep, {}, 10);
  for (int round = 0; round < 20; ++round) {
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (rng() % 7 == 0) keep[i] = false;
    auto cur = evaluate_labeled(lp, keep, {}, 10);
    CHECK(cur.fupi <= prev.fupi);
    CHECK(*cur.nmh >= *prev.nmh);
    CHECK(*cur.sg >= *prev.sg);
    prev = cur;
  }
}

}  // TEST_SUITE
