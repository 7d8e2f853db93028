#include <random>
#include <set>

#include "doctest.h"
#include "dualmem/labeling.hpp"
#include "dualmem/probe.hpp"
#include "dualmem/synth.hpp"
#include "oracles.hpp"

using namespace dualmem;

namespace {

std::vector<LabeledProposal> labeled_synth(const SynthData& d) {
  return label_unknown_stream(d.proposals, d.groundtruth);
}

}  // namespace

TEST_SUITE("probe") {

TEST_CASE("group k-fold: one image per fold") {
  std::vector<std::string> ids{"a", "b", "c", "d", "e", "a", "c"};
  auto f = group_kfold(ids, 5, 0);
  std::set<std::size_t> folds(f.fold.begin(), f.fold.begin() + 5);
  CHECK(folds.size() == 5);
  CHECK(f.fold[5] == f.fold[0]);
  CHECK(f.fold[6] == f.fold[2]);
}

TEST_CASE("group k-fold is a deterministic partition that keeps images whole") {
  std::mt19937_64 rng(1);
  std::vector<std::string> ids;
  for (int i = 0; i < 500; ++i) ids.push_back("img" + std::to_string(rng() % 37));
  auto a = group_kfold(ids, 5, 9);
  auto b = group_kfold(ids, 5, 9);
  CHECK(a.fold == b.fold);
  std::vector<std::size_t> per_fold(5, 0);
  for (const auto& [img, f] : a.fold_of_image) {
    REQUIRE(f < 5);
    ++per_fold[f];
  }
  for (std::size_t c : per_fold) CHECK((c == 7 || c == 8));  // 37 images dealt round-robin
  for (std::size_t i = 0; i < ids.size(); ++i) CHECK(a.fold[i] == a.fold_of_image.at(ids[i]));
  CHECK_THROWS_AS(group_kfold(std::vector<std::string>{"a", "b"}, 5, 0), Error);
}

TEST_CASE("logistic regression basics") {
  auto x = testutil::from_rows(2, {{1, 0}, {0.9f, 0.1f}, {0, 1}, {0.1f, 0.9f}});
  x.normalize_rows();
  std::vector<std::size_t> rows{0, 1, 2, 3};
  std::vector<std::uint8_t> y{1, 1, 0, 0}, flipped{0, 0, 1, 1};
  auto m = fit_logistic(x, rows, y);
  for (std::size_t i = 0; i < 4; ++i) CHECK((m.probability(x.row(i)) > 0.5) == (y[i] == 1));
  auto mf = fit_logistic(x, rows, flipped);
  for (std::size_t j = 0; j < 2; ++j) CHECK(mf.weights[j] == doctest::Approx(-m.weights[j]).epsilon(1e-9));

  LogisticConfig zero;
  zero.iters = 0;
  auto m0 = fit_logistic(x, rows, y, zero);
  for (std::size_t i = 0; i < 4; ++i) CHECK(m0.probability(x.row(i)) == 0.5);
  std::vector<std::uint8_t> one_class{1, 1, 1, 1};
  CHECK_THROWS_AS(fit_logistic(x, rows, one_class), Error);
}

TEST_CASE("separable synthetic data gives near-perfect AUROC") {
  SynthConfig c;
  c.n_pos = 200;
  c.n_neg = 200;
  c.images = 20;
  c.spread = 0.3;
  auto d = generate(c);
  auto r = run_probe(labeled_synth(d), d.embeddings);
  CHECK(r.completed_folds.size() == 5);
  CHECK(r.mean_auroc >= 0.99);
  CHECK(r.n_pos == 200);
  CHECK(r.n_neg == 200);
  CHECK(r.logit_ovl.has_value());
}

TEST_CASE("permuted labels give chance AUROC") {
  SynthConfig c;
  c.n_pos = 500;
  c.n_neg = 500;
  c.images = 40;
  c.seed = 5;
  auto d = generate(c);
  auto lp = labeled_synth(d);
  // Shuffle labels across proposals; the embeddings now carry no signal.
  std::vector<Label> labels;
  for (auto& x : lp) labels.push_back(x.label);
  std::mt19937_64 rng(3);
  std::shuffle(labels.begin(), labels.end(), rng);
  for (std::size_t i = 0; i < lp.size(); ++i) lp[i].label = labels[i];
  auto r = run_probe(lp, d.embeddings);
  CHECK(r.mean_auroc >= 0.45);
  CHECK(r.mean_auroc <= 0.55);
}

TEST_CASE("out-of-fold logits never come from a model that saw the image") {
  SynthConfig c;
  c.n_pos = 60;
  c.n_neg = 60;
  c.images = 10;
  c.seed = 2;
  auto d = generate(c);
  auto lp = labeled_synth(d);
  ProbeConfig cfg;
  auto r = run_probe(lp, d.embeddings, cfg);

  // Refit fold 0 by hand from images outside it and compare its logits.
  std::vector<std::string> images;
  std::vector<const LabeledProposal*> used;
  for (const auto& x : lp)
    if (x.label == Label::pos || x.label == Label::neg) {
      images.push_back(x.proposal.image_id);
      used.push_back(&x);
    }
  auto folds = group_kfold(images, cfg.n_folds, cfg.seed);
  std::vector<std::size_t> train;
  std::vector<std::uint8_t> ty;
  std::vector<double> expect;
  for (std::size_t i = 0; i < used.size(); ++i)
    if (folds.fold[i] != 0) {
      train.push_back(*used[i]->proposal.embedding_index);
      ty.push_back(used[i]->label == Label::pos);
    }
  auto m = fit_logistic(d.embeddings, train, ty, cfg.logistic);
  for (std::size_t i = 0; i < used.size(); ++i)
    if (folds.fold[i] == 0) expect.push_back(m.logit(d.embeddings.row(*used[i]->proposal.embedding_index)));
  REQUIRE(r.completed_folds.front() == 0);
  for (std::size_t j = 0; j < expect.size(); ++j) CHECK(r.oof_logits[j] == expect[j]);
}

TEST_CASE("single-class folds are skipped with a warning") {
  // Every positive sits in image a, every negative in images b..f.
  std::vector<LabeledProposal> lp;
  std::mt19937_64 rng(4);
  auto emb = testutil::random_unit_rows(60, 4, rng);
  for (std::size_t i = 0; i < 60; ++i) {
    LabeledProposal x;
    const bool pos = i < 10 || i % 7 == 0;
    x.proposal = testutil::proposal("p" + std::to_string(i), pos && i < 10 ? "a" : std::string(1, char('b' + i % 5)),
                                    {0, 0, 1, 1}, Stream::unknown, i);
    x.label = pos ? Label::pos : Label::neg;
    lp.push_back(x);
  }
  auto r = run_probe(lp, emb);
  CHECK(r.completed_folds.size() + r.skipped_folds.size() == 5);
  CHECK(r.warnings.size() == r.skipped_folds.size());
}

}  // TEST_SUITE
