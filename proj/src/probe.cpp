#include "dualmem/probe.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dualmem/metrics.hpp"
#include "dualmem/parallel.hpp"
#include "dualmem/random.hpp"
#include "json.hpp"

namespace dualmem {

FoldAssignment group_kfold(std::span<const std::string> image_ids, std::size_t n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw Error("group_kfold: need at least 2 folds");
  std::set<std::string> unique(image_ids.begin(), image_ids.end());
  if (unique.size() < n_folds)
    throw Error("group_kfold: " + std::to_string(unique.size()) + " distinct images for " + std::to_string(n_folds) +
                " folds");
  std::vector<std::string> order(unique.begin(), unique.end());
  Rng rng(seed);
  rng.shuffle(order);

  FoldAssignment fa;
  fa.n_folds = n_folds;
  for (std::size_t i = 0; i < order.size(); ++i) fa.fold_of_image.emplace(order[i], i % n_folds);
  fa.fold.reserve(image_ids.size());
  for (const auto& id : image_ids) fa.fold.push_back(fa.fold_of_image.at(id));
  return fa;
}

double LogisticModel::logit(std::span<const float> x) const {
  double z = bias;
  for (std::size_t j = 0; j < weights.size(); ++j) z += weights[j] * x[j];
  return z;
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double LogisticModel::probability(std::span<const float> x) const { return sigmoid(logit(x)); }

LogisticModel fit_logistic(const EmbeddingMatrix& x, std::span<const std::size_t> rows,
                           std::span<const std::uint8_t> labels, const LogisticConfig& cfg) {
  if (rows.size() != labels.size()) throw Error("fit_logistic: rows and labels differ in length");
  std::size_t n_pos = 0;
  for (auto l : labels) n_pos += l ? 1 : 0;
  if (n_pos == 0 || n_pos == labels.size()) throw Error("fit_logistic: training data holds a single class");

  const std::size_t dim = x.dim();
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  LogisticModel m;
  m.weights.assign(dim, 0.0);
  std::vector<double> grad(dim);
  for (std::size_t it = 0; it < cfg.iters; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_b = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto xi = x.row(rows[i]);
      const double r = sigmoid(m.logit(xi)) - (labels[i] ? 1.0 : 0.0);
      for (std::size_t j = 0; j < dim; ++j) grad[j] += r * xi[j];
      grad_b += r;
    }
    for (std::size_t j = 0; j < dim; ++j) m.weights[j] -= cfg.step * (grad[j] * inv_n + cfg.l2 * m.weights[j]);
    m.bias -= cfg.step * grad_b * inv_n;
  }
  return m;
}

ProbeResult run_probe(std::span<const LabeledProposal> labeled, const EmbeddingMatrix& embeddings,
                      const ProbeConfig& cfg) {
  std::vector<std::size_t> rows;
  std::vector<std::uint8_t> y;
  std::vector<std::string> images;
  std::vector<double> objectness;
  for (const auto& lp : labeled) {
    if (lp.label != Label::pos && lp.label != Label::neg) continue;
    const auto& p = lp.proposal;
    if (!p.embedding_index) throw Error("probe: proposal '" + p.id + "' has no embedding");
    if (*p.embedding_index >= embeddings.count()) throw Error("probe: proposal '" + p.id + "': embedding_index out of range");
    rows.push_back(static_cast<std::size_t>(*p.embedding_index));
    y.push_back(lp.label == Label::pos ? 1 : 0);
    images.push_back(p.image_id);
    objectness.push_back(p.objectness);
  }

  ProbeResult res;
  for (auto v : y) (v ? res.n_pos : res.n_neg)++;
  if (res.n_pos == 0 || res.n_neg == 0) throw Error("probe: need both positive and negative proposals");

  res.objectness_auroc = auroc(objectness, y);
  {
    std::vector<double> po, ne;
    for (std::size_t i = 0; i < y.size(); ++i) (y[i] ? po : ne).push_back(objectness[i]);
    res.objectness_ovl = overlap_coefficient(po, ne);
  }

  const FoldAssignment folds = group_kfold(images, cfg.n_folds, cfg.seed);

  struct FoldOutput {
    bool done = false;
    std::string warning;
    double auroc = 0.0;
    std::vector<std::size_t> test_idx;
    std::vector<double> logits;
  };
  std::vector<FoldOutput> per_fold(cfg.n_folds);

  parallel_for(
      cfg.n_folds,
      [&](std::size_t f) {
        FoldOutput& out = per_fold[f];
        std::vector<std::size_t> train_rows;
        std::vector<std::uint8_t> train_y, test_y;
        std::size_t train_pos = 0, test_pos = 0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
          if (folds.fold[i] == f) {
            out.test_idx.push_back(i);
            test_y.push_back(y[i]);
            test_pos += y[i];
          } else {
            train_rows.push_back(rows[i]);
            train_y.push_back(y[i]);
            train_pos += y[i];
          }
        }
        if (train_pos == 0 || train_pos == train_y.size() || test_pos == 0 || test_pos == test_y.size()) {
          out.warning = "fold " + std::to_string(f) + " skipped: single class in " +
                        ((test_pos == 0 || test_pos == test_y.size()) ? "test" : "train") + " split";
          return;
        }
        const LogisticModel model = fit_logistic(embeddings, train_rows, train_y, cfg.logistic);
        out.logits.reserve(out.test_idx.size());
        for (std::size_t i : out.test_idx) out.logits.push_back(model.logit(embeddings.row(rows[i])));
        out.auroc = auroc(out.logits, test_y);
        out.done = true;
      },
      cfg.threads);

  for (std::size_t f = 0; f < cfg.n_folds; ++f) {
    const auto& o = per_fold[f];
    if (!o.done) {
      res.skipped_folds.push_back(f);
      res.warnings.push_back(o.warning);
      continue;
    }
    res.completed_folds.push_back(f);
    res.fold_auroc.push_back(o.auroc);
    for (std::size_t j = 0; j < o.test_idx.size(); ++j) {
      res.oof_logits.push_back(o.logits[j]);
      res.oof_labels.push_back(y[o.test_idx[j]]);
    }
  }
  if (res.fold_auroc.empty()) throw Error("probe: every fold was skipped");

  double sum = 0.0;
  for (double a : res.fold_auroc) sum += a;
  res.mean_auroc = sum / static_cast<double>(res.fold_auroc.size());
  double var = 0.0;
  for (double a : res.fold_auroc) var += (a - res.mean_auroc) * (a - res.mean_auroc);
  res.std_auroc = std::sqrt(var / static_cast<double>(res.fold_auroc.size()));

  std::vector<double> lp, ln;
  for (std::size_t i = 0; i < res.oof_logits.size(); ++i) (res.oof_labels[i] ? lp : ln).push_back(res.oof_logits[i]);
  if (!lp.empty() && !ln.empty()) res.logit_ovl = overlap_coefficient(lp, ln);
  return res;
}

std::string to_json(const ProbeResult& r) {
  using oj = nlohmann::ordered_json;
  auto opt = [](const std::optional<double>& v) { return v ? oj(*v) : oj(nullptr); };
  oj o;
  o["n_pos"] = r.n_pos;
  o["n_neg"] = r.n_neg;
  o["fold_auroc"] = r.fold_auroc;
  o["completed_folds"] = r.completed_folds;
  o["skipped_folds"] = r.skipped_folds;
  o["mean_auroc"] = r.mean_auroc;
  o["std_auroc"] = r.std_auroc;
  o["logit_ovl"] = opt(r.logit_ovl);
  o["objectness_auroc"] = opt(r.objectness_auroc);
  o["objectness_ovl"] = opt(r.objectness_ovl);
  o["warnings"] = r.warnings;
  return o.dump(2);
}

}  // namespace dualmem
