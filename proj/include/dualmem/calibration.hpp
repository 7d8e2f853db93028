#pragma once

#include <span>
#include <string>
#include <vector>

#include "dualmem/memory.hpp"
#include "dualmem/metrics.hpp"

namespace dualmem {

inline constexpr double kDefaultAlpha = 0.10;

/// Number of calibration scores allowed to exceed the threshold:
/// the largest e with e / n <= alpha.
std::size_t allowed_exceedances(std::size_t n, double alpha);

/// Neyman-Pearson threshold: the m-th smallest score, m = n - allowed_exceedances(n, alpha)
/// (equivalently ceil((1 - alpha) n)). At most floor(alpha n) scores are strictly
/// greater than the result.
double np_threshold(std::span<const double> scores, double alpha);

struct ScoreSummary {
  std::size_t n = 0;
  double min = 0.0, max = 0.0, mean = 0.0;
  double q05 = 0.0, q25 = 0.0, q50 = 0.0, q75 = 0.0, q95 = 0.0;
};

/// Order-statistic summary (quantiles use the same convention as np_threshold).
ScoreSummary summarize_scores(std::span<const double> scores);

struct Calibration {
  double alpha = kDefaultAlpha;
  double tau = 0.0;
  std::vector<double> threshold_scores;  // lambda on the threshold positives
  ScoreSummary summary;
};

/// Scores the held-out threshold positives and places tau.
Calibration calibrate(const DualMemory& mem, const LrtParams& params, double alpha, std::size_t threads = 0);

std::string to_json(const Calibration& c);

struct OperatingPoint {
  double alpha = 0.0;
  double tau = 0.0;
  MetricsReport metrics;
};

/// Evaluation inputs for a sweep: the full proposal stream of the evaluation
/// split, its ground truth and embeddings.
struct EvalSet {
  std::vector<ProposalRecord> proposals;
  std::vector<GroundTruthBox> groundtruth;
  EmbeddingMatrix embeddings;
  std::size_t image_count = 0;
};

/// Number of distinct image ids across proposals and ground truth.
std::size_t count_images(std::span<const ProposalRecord> proposals, std::span<const GroundTruthBox> groundtruth);

/// One operating point per alpha (alphas strictly increasing, each in (0,1)).
/// Calibration and evaluation lambdas are computed once and re-thresholded.
std::vector<OperatingPoint> alpha_sweep(const DualMemory& mem, const LrtParams& params, const EvalSet& eval,
                                        std::span<const double> alphas, std::size_t threads = 0);

std::string sweep_to_csv(std::span<const OperatingPoint> points);

}  // namespace dualmem
