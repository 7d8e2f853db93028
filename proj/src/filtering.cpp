#include "dualmem/filtering.hpp"

#include <unordered_map>

#include "dualmem/io.hpp"

namespace dualmem {

std::vector<std::optional<double>> score_stream(std::span<const ProposalRecord> proposals,
                                                const EmbeddingMatrix& embeddings,
                                                const DualMemory& mem,
                                                const LrtParams& params,
                                                std::size_t threads) {
  std::vector<std::size_t> slots, rows;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const auto& p = proposals[i];
    if (p.stream != Stream::unknown) continue;
    if (!p.embedding_index) throw Error("unknown-stream proposal '" + p.id + "' has no embedding");
    if (*p.embedding_index >= embeddings.count())
      throw Error("proposal '" + p.id + "': embedding_index " + std::to_string(*p.embedding_index) +
                  " out of range (matrix has " + std::to_string(embeddings.count()) + " rows)");
    slots.push_back(i);
    rows.push_back(static_cast<std::size_t>(*p.embedding_index));
  }
  std::vector<std::optional<double>> out(proposals.size());
  if (rows.empty()) return out;
  const auto scores = lrt_scores(embeddings, rows, mem, params, threads);
  for (std::size_t j = 0; j < slots.size(); ++j) out[slots[j]] = scores[j];
  return out;
}

std::vector<FilterDecision> apply_threshold(std::span<const ProposalRecord> proposals,
                                            std::span<const std::optional<double>> scores,
                                            double tau) {
  if (scores.size() != proposals.size()) throw Error("apply_threshold: score count mismatch");
  std::vector<FilterDecision> out;
  out.reserve(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    FilterDecision d;
    d.id = proposals[i].id;
    d.tau = tau;
    if (proposals[i].stream == Stream::unknown) {
      if (!scores[i]) throw Error("apply_threshold: missing score for '" + proposals[i].id + "'");
      d.lambda = scores[i];
      d.suppressed = suppress_rule(*scores[i], tau);
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<FilterDecision> filter_stream(std::span<const ProposalRecord> proposals,
                                          const EmbeddingMatrix& embeddings,
                                          const DualMemory& mem,
                                          const LrtParams& params,
                                          double tau,
                                          std::size_t threads) {
  const auto scores = score_stream(proposals, embeddings, mem, params, threads);
  return apply_threshold(proposals, scores, tau);
}

std::vector<ProposalRecord> retained_stream(std::span<const ProposalRecord> proposals,
                                            std::span<const FilterDecision> decisions) {
  if (decisions.size() != proposals.size()) throw Error("retained_stream: decision count mismatch");
  std::vector<ProposalRecord> out;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (decisions[i].id != proposals[i].id) throw Error("retained_stream: decision order does not match proposals");
    if (!decisions[i].suppressed) out.push_back(proposals[i]);
  }
  return out;
}

void attach_labels(std::vector<FilterDecision>& decisions,
                   std::span<const ProposalRecord> proposals,
                   std::span<const GroundTruthBox> groundtruth,
                   const LabelThresholds& thr) {
  std::unordered_map<std::string, Label> labels;
  for (const auto& lp : label_unknown_stream(proposals, groundtruth, thr)) labels.emplace(lp.proposal.id, lp.label);
  for (auto& d : decisions) {
    auto it = labels.find(d.id);
    if (it != labels.end()) d.label = it->second;
  }
}

}  // namespace dualmem
