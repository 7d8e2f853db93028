#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dualmem/calibration.hpp"
#include "dualmem/memory.hpp"
#include "dualmem/metrics.hpp"

namespace dualmem {

struct SplitPaths {
  std::filesystem::path proposals;
  std::filesystem::path groundtruth;
  std::filesystem::path embeddings;
};

struct RunConfig {
  SplitPaths calibration;
  SplitPaths evaluation;
  std::string critic = "default";  // label for the embedding files in use
  LrtParams params;
  double alpha = kDefaultAlpha;
  double split_fraction = 0.5;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "dualmem_out";
  std::optional<std::size_t> image_count;  // evaluation images; default: distinct ids
  std::vector<double> sweep_alphas;        // optional alpha sweep
  std::size_t threads = 0;

  void validate() const;
};

/// Parses a JSON config. Relative paths resolve against `base_dir`.
RunConfig run_config_from_json(const std::string& text, const std::filesystem::path& base_dir = {});
/// Every field, defaults included.
std::string run_config_to_json(const RunConfig& cfg);

struct PipelineReport {
  MetricsReport raw;
  MetricsReport filtered;
  Calibration calibration;
  std::size_t memory_positive = 0;
  std::size_t memory_negative = 0;
  std::size_t threshold_positive = 0;
  std::vector<OperatingPoint> sweep;
};

/// Throws when a calibration image id also appears in the evaluation split.
void check_image_disjoint(const std::vector<ProposalRecord>& cal_proposals,
                          const std::vector<GroundTruthBox>& cal_groundtruth,
                          const std::vector<ProposalRecord>& eval_proposals,
                          const std::vector<GroundTruthBox>& eval_groundtruth);

/// label -> build memory -> calibrate -> filter -> evaluate (raw and filtered),
/// writing every stage artifact under cfg.output_dir.
PipelineReport run_pipeline(const RunConfig& cfg);

/// Side-by-side raw / filtered table.
std::string report_to_json(const PipelineReport& r, const RunConfig& cfg);

}  // namespace dualmem
