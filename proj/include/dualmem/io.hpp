#pragma once

// Interchange formats.
//
//   proposals.jsonl    {"id","image_id","bbox":[x1,y1,x2,y2],"objectness","stream","embedding_index"?}
//   groundtruth.jsonl  {"image_id","bbox":[...],"category":"known"|"future"}
//   decisions.jsonl    {"id","lambda","tau","suppressed","label"?}
//   labels.jsonl       {"id","image_id","label","max_iou_future","max_iou_known"}
//   embeddings (binary) "DMEM", u32 version=1, u32 dim, u64 count, count*dim f32,
//                       all little-endian, row-major.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dualmem/types.hpp"

namespace dualmem {

inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;

/// Rows whose norm is within this distance of 1 are renormalized on load.
inline constexpr double kNormRejectTolerance = 1e-1;
/// Rows closer than this to unit norm are kept bit-for-bit.
inline constexpr double kNormExactTolerance = 1e-6;

std::vector<ProposalRecord> load_proposals(const std::filesystem::path& path);
std::vector<ProposalRecord> parse_proposals(std::istream& in, const std::string& source = "<stream>");
void save_proposals(const std::vector<ProposalRecord>& proposals, const std::filesystem::path& path);
std::string proposal_to_json(const ProposalRecord& p);

std::vector<GroundTruthBox> load_groundtruth(const std::filesystem::path& path);
std::vector<GroundTruthBox> parse_groundtruth(std::istream& in, const std::string& source = "<stream>");
void save_groundtruth(const std::vector<GroundTruthBox>& boxes, const std::filesystem::path& path);

EmbeddingMatrix load_embeddings(const std::filesystem::path& path);
/// Reads one DMEM block from the current stream position.
EmbeddingMatrix read_embeddings(std::istream& in);
void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path);
void write_embeddings(const EmbeddingMatrix& m, std::ostream& out);

std::vector<FilterDecision> load_decisions(const std::filesystem::path& path);
std::vector<FilterDecision> parse_decisions(std::istream& in, const std::string& source = "<stream>");
void save_decisions(const std::vector<FilterDecision>& decisions, const std::filesystem::path& path);
void write_decisions(const std::vector<FilterDecision>& decisions, std::ostream& out);
std::string decision_to_json(const FilterDecision& d);

std::vector<LabeledProposal> load_labels(const std::filesystem::path& path,
                                         const std::vector<ProposalRecord>& proposals);
void save_labels(const std::vector<LabeledProposal>& labeled, const std::filesystem::path& path);

/// Cross-checks proposals against an embedding matrix: every embedding index
/// is in range, and (optionally) every unknown-stream record has one.
void validate_embedding_refs(const std::vector<ProposalRecord>& proposals,
                             const EmbeddingMatrix& embeddings,
                             bool require_unknown_embeddings);

}  // namespace dualmem
