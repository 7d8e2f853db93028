#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dualmem/labeling.hpp"
#include "dualmem/memory.hpp"

namespace dualmem {

/// Suppress iff lambda > tau (strict).
inline bool suppress_rule(double lambda, double tau) { return lambda > tau; }

/// Lambda per proposal, in input order; unset for known-stream records.
/// Every unknown-stream proposal must carry an embedding index.
std::vector<std::optional<double>> score_stream(std::span<const ProposalRecord> proposals,
                                                const EmbeddingMatrix& embeddings,
                                                const DualMemory& mem,
                                                const LrtParams& params,
                                                std::size_t threads = 0);

/// Turns precomputed scores into decisions at threshold tau. Known-stream
/// records (unset score) are never suppressed.
std::vector<FilterDecision> apply_threshold(std::span<const ProposalRecord> proposals,
                                            std::span<const std::optional<double>> scores,
                                            double tau);

/// One decision per proposal, in input order.
std::vector<FilterDecision> filter_stream(std::span<const ProposalRecord> proposals,
                                          const EmbeddingMatrix& embeddings,
                                          const DualMemory& mem,
                                          const LrtParams& params,
                                          double tau,
                                          std::size_t threads = 0);

/// The records kept by `decisions` (matched by position), order preserved.
std::vector<ProposalRecord> retained_stream(std::span<const ProposalRecord> proposals,
                                            std::span<const FilterDecision> decisions);

/// Fills FilterDecision::label from ground truth for unknown-stream records.
void attach_labels(std::vector<FilterDecision>& decisions,
                   std::span<const ProposalRecord> proposals,
                   std::span<const GroundTruthBox> groundtruth,
                   const LabelThresholds& thr = {});

}  // namespace dualmem
