#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dualmem/labeling.hpp"
#include "dualmem/types.hpp"

namespace dualmem {

/// Unknown-stream metrics on a retained set K drawn from the raw stream D.
/// Ratio metrics are unset when their denominator is zero.
struct MetricsReport {
  double fupi = 0.0;
  std::optional<double> sg;
  std::optional<double> nmh;
  std::optional<double> u_recall;
  std::optional<double> udp;
  LabelCounts raw;
  LabelCounts retained;
  std::size_t image_count = 0;
  std::size_t future_gt = 0;
  std::size_t future_gt_recalled = 0;

  bool operator==(const MetricsReport&) const = default;
};

LabelCounts count_labels(std::span<const LabeledProposal> labeled);

/// Retained background-type false unknowns per image.
double fupi(const LabelCounts& retained, std::size_t image_count);

/// 1 - retained_neg / raw_neg.
std::optional<double> suppression_gain(const LabelCounts& raw, const LabelCounts& retained);

/// Suppressed positives over raw positives.
std::optional<double> nmh(const LabelCounts& raw, const LabelCounts& retained);

/// retained_pos / (retained_pos + retained_neg).
std::optional<double> udp(const LabelCounts& retained);

/// Fraction of future-category boxes hit at IoU >= match_iou by at least one
/// retained unknown-stream prediction of the same image. Unset when there
/// are no future boxes.
std::optional<double> u_recall(std::span<const ProposalRecord> retained,
                               std::span<const GroundTruthBox> groundtruth,
                               double match_iou = 0.5);

/// Rank-sum AUROC: P(positive score > negative score) + 0.5 P(tie).
/// labels: nonzero = positive.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);
double auroc(std::span<const double> positives, std::span<const double> negatives);

/// Histogram overlap sum_b min(P_b, Q_b) over `bins` equal-width bins
/// spanning the pooled range. 1.0 when every value is identical.
double overlap_coefficient(std::span<const double> a, std::span<const double> b, std::size_t bins = 100);

/// Metrics for one retained mask over labeled unknown proposals
/// (`retained[i]` refers to `labeled[i]`).
MetricsReport evaluate_labeled(std::span<const LabeledProposal> labeled,
                               const std::vector<bool>& retained,
                               std::span<const GroundTruthBox> groundtruth,
                               std::size_t image_count);

/// Labels the unknown stream and scores it. With `decisions == nullptr` the raw
/// stream is scored; otherwise suppressed proposals are dropped first. Every
/// unknown-stream proposal needs a decision.
MetricsReport evaluate(std::span<const ProposalRecord> proposals,
                       std::span<const GroundTruthBox> groundtruth,
                       const std::vector<FilterDecision>* decisions,
                       std::size_t image_count,
                       const LabelThresholds& thr = {});

std::string to_json(const MetricsReport& r);

}  // namespace dualmem
