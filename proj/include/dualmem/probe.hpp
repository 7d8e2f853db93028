#pragma once

// Linear-probe separability diagnostic: logistic regression on embeddings,
// positive vs negative unknowns, image-grouped k-fold.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dualmem/types.hpp"

namespace dualmem {

struct FoldAssignment {
  std::unordered_map<std::string, std::size_t> fold_of_image;
  std::vector<std::size_t> fold;  // per input entry
  std::size_t n_folds = 0;
};

/// Shuffles the sorted distinct image ids with `seed` and deals them to folds
/// round-robin; each entry inherits its image's fold.
FoldAssignment group_kfold(std::span<const std::string> image_ids, std::size_t n_folds = 5, std::uint64_t seed = 0);

struct LogisticConfig {
  double l2 = 1e-4;
  std::size_t iters = 1000;
  double step = 0.1;
};

struct LogisticModel {
  std::vector<double> weights;
  double bias = 0.0;

  double logit(std::span<const float> x) const;
  double probability(std::span<const float> x) const;
};

/// Full-batch gradient descent from zero on mean log-loss + (l2/2)|w|^2
/// (bias unregularized). `rows` index into `x`; labels are 0/1 per row.
LogisticModel fit_logistic(const EmbeddingMatrix& x, std::span<const std::size_t> rows,
                           std::span<const std::uint8_t> labels, const LogisticConfig& cfg = {});

struct ProbeResult {
  std::vector<double> fold_auroc;           // completed folds only
  std::vector<std::size_t> completed_folds;
  std::vector<std::size_t> skipped_folds;
  std::vector<std::string> warnings;
  double mean_auroc = 0.0;
  double std_auroc = 0.0;                   // population std over completed folds
  std::vector<double> oof_logits;           // pooled out-of-fold scores
  std::vector<std::uint8_t> oof_labels;
  std::optional<double> logit_ovl;
  std::optional<double> objectness_auroc;   // raw objectness, no fitting
  std::optional<double> objectness_ovl;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

struct ProbeConfig {
  std::size_t n_folds = 5;
  std::uint64_t seed = 0;
  LogisticConfig logistic;
  std::size_t threads = 0;
};

/// Runs the grouped-CV probe on pos/neg labeled proposals (other labels are
/// ignored). A fold whose train or test part holds a single class is
/// skipped and reported.
ProbeResult run_probe(std::span<const LabeledProposal> labeled, const EmbeddingMatrix& embeddings,
                      const ProbeConfig& cfg = {});

std::string to_json(const ProbeResult& r);

}  // namespace dualmem
