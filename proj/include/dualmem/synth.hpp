#pragma once

// Deterministic synthetic proposal streams with known labels.
//
// Every labeled item occupies its own 100x100 cell of a 1000x1000 image, so
// boxes in different cells never overlap and each proposal's IoU against the
// ground truth is fixed by construction:
//   pos               future box + proposal shifted by <= 8 px (IoU >= 0.68)
//   known_as_unknown  known box  + proposal shifted by <= 8 px
//   amb               box + proposal covering 40% of it (IoU 0.4)
//   neg               proposal alone in its cell (IoU 0)
// Embeddings are normalize(direction + spread * g / sqrt(dim)), g ~ N(0, I).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dualmem/types.hpp"

namespace dualmem {

struct ObjectnessRange {
  double lo = 0.0;
  double hi = 1.0;
};

struct SynthConfig {
  std::size_t dim = 32;
  std::size_t n_pos = 100;
  std::size_t n_neg = 100;
  std::size_t n_known_as_unknown = 0;
  std::size_t n_amb = 0;
  std::size_t n_known_stream = 0;   // known-stream detections, no embedding
  std::size_t n_missed_future = 0;  // future boxes with no proposal
  std::size_t images = 10;
  std::uint64_t seed = 0;
  /// Seed for the class directions alone. Splits generated with different
  /// `seed` but the same direction seed share one class geometry.
  std::optional<std::uint64_t> direction_seed;

  double spread = 0.3;
  std::size_t pos_modes = 1;        // > 1 makes positives multimodal
  std::size_t neg_modes = 1;
  /// Share of negatives drawn around "twin" directions of the positive
  /// modes, at cosine `hard_negative_cos` from them.
  double hard_negative_fraction = 0.0;
  double hard_negative_cos = 0.85;
  /// All classes share one direction (no separability).
  bool shared_direction = false;

  ObjectnessRange pos_objectness{0.3, 0.9};
  ObjectnessRange neg_objectness{0.1, 0.7};
  ObjectnessRange other_objectness{0.2, 0.8};

  std::string image_prefix = "img";
  std::string id_prefix = "p";

  void validate() const;
};

inline constexpr std::size_t kSynthCellsPerImage = 100;

SynthConfig synth_config_from_json(const std::string& text);
std::string synth_config_to_json(const SynthConfig& cfg);

struct SynthData {
  std::vector<ProposalRecord> proposals;
  std::vector<GroundTruthBox> groundtruth;
  EmbeddingMatrix embeddings;
  /// Label each unknown-stream proposal was built to receive, by proposal order
  /// (known-stream entries hold no value).
  std::vector<std::optional<Label>> intended;
};

SynthData generate(const SynthConfig& cfg);

/// Writes proposals.jsonl, groundtruth.jsonl and embeddings.bin into `dir`.
void write_synth(const SynthData& data, const std::filesystem::path& dir);

}  // namespace dualmem
