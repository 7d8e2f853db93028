#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dualmem/types.hpp"

namespace dualmem {

/// IoU cut-offs of the four-way priority rule. Defaults are the published
/// values; they are only meant to be changed for diagnostics.
struct LabelThresholds {
  double match = 0.5;       // >= match: pos (future) or known_as_unknown (known)
  double background = 0.3;  // max IoU < background: neg
};

/// Intersection over union; 0 for disjoint boxes.
double iou(const BBox& a, const BBox& b);

/// Labels one unknown-stream proposal. `known` and `future` must already be
/// restricted to the proposal's image.
LabeledProposal label_proposal(const ProposalRecord& d,
                               std::span<const GroundTruthBox> known,
                               std::span<const GroundTruthBox> future,
                               const LabelThresholds& thr = {});

/// Labels every unknown-stream proposal against the ground truth of its own
/// image. Known-stream proposals are skipped; input order is preserved.
std::vector<LabeledProposal> label_unknown_stream(std::span<const ProposalRecord> proposals,
                                                  std::span<const GroundTruthBox> groundtruth,
                                                  const LabelThresholds& thr = {});

struct LabelCounts {
  std::size_t pos = 0;
  std::size_t known_as_unknown = 0;
  std::size_t neg = 0;
  std::size_t amb = 0;

  std::size_t total() const { return pos + known_as_unknown + neg + amb; }
  std::size_t& operator[](Label l);
  std::size_t operator[](Label l) const;

  bool operator==(const LabelCounts&) const = default;
};

struct StreamDecomposition {
  LabelCounts counts;
  // Percentages over all unknown predictions; unset on an empty stream.
  std::optional<double> pct_pos;
  std::optional<double> pct_known_as_unknown;
  std::optional<double> pct_neg;
  std::optional<double> pct_amb;
  std::size_t total = 0;
  std::size_t image_count = 0;
};

StreamDecomposition decompose(std::span<const LabeledProposal> proposals, std::size_t image_count);

std::string to_json(const StreamDecomposition& d);

}  // namespace dualmem
