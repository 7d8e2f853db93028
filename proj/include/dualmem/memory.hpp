#pragma once

// Dual k-NN memories and the temperature-scaled likelihood-ratio score.
//
// For a unit-norm query q and a memory M, with n_1..n_k' the k' = min(k, |M|)
// rows of M most cosine-similar to q (ties to the lower row index):
//
//   log_density(q, M) = log sum_i exp(cos(q, n_i) / T) - log k'
//
// and the suppression statistic is
//
//   lambda(q) = log_density(q, M-) - log_density(q, M+)
//
// so large lambda means background-like.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dualmem/types.hpp"

namespace dualmem {

struct LrtParams {
  std::size_t k = 25;
  double temperature = 0.05;

  void validate() const;
};

struct MemoryProvenance {
  std::string split_id = "calibration";
  double split_fraction = 0.5;
  std::uint64_t seed = 0;
};

/// Positive memory, negative memory and held-out threshold positives. The
/// positive memory and the threshold set come from disjoint proposals.
struct DualMemory {
  EmbeddingMatrix positive;
  EmbeddingMatrix negative;
  EmbeddingMatrix threshold_positives;
  MemoryProvenance provenance;

  std::size_t dim() const { return positive.dim(); }
};

/// Splits calibration positives (seeded shuffle) into the positive memory and
/// the threshold set, and puts every calibration negative into the negative
/// memory. Other labels are ignored.
DualMemory build_memory(std::span<const LabeledProposal> calibration,
                        const EmbeddingMatrix& embeddings,
                        double split_fraction = 0.5,
                        std::uint64_t seed = 0,
                        const std::string& split_id = "calibration");

/// Number of positives that go to the memory subset for `n` positives.
std::size_t memory_subset_size(std::size_t n, double split_fraction);

/// Log-sum-exp of values, max-subtracted.
double log_sum_exp(std::span<const double> values);

/// Exact brute-force log-density of `query` under `memory`.
double knn_logdensity(std::span<const float> query, const EmbeddingMatrix& memory, const LrtParams& params);

double lrt_score(std::span<const float> query, const DualMemory& mem, const LrtParams& params);

/// Scores every row of `queries`, in parallel. `threads == 0` uses the default.
std::vector<double> lrt_scores(const EmbeddingMatrix& queries, const DualMemory& mem,
                               const LrtParams& params, std::size_t threads = 0);

/// Scores selected rows of `embeddings`.
std::vector<double> lrt_scores(const EmbeddingMatrix& embeddings, std::span<const std::size_t> rows,
                               const DualMemory& mem, const LrtParams& params, std::size_t threads = 0);

/// Highest cosine similarity between `query` and any row of `memory`.
double max_cosine(std::span<const float> query, const EmbeddingMatrix& memory);

enum class FusionMode { concat, average };
FusionMode fusion_mode_from_string(std::string_view s);

/// Combines two critics' embeddings row by row, then renormalizes.
EmbeddingMatrix fuse_embeddings(const EmbeddingMatrix& a, const EmbeddingMatrix& b, FusionMode mode);

// Memory file: one JSON header line with provenance and section sizes,
// followed by three DMEM blocks (positive, negative, threshold positives).
void save_memory(const DualMemory& mem, const std::filesystem::path& path);
DualMemory load_memory(const std::filesystem::path& path);

}  // namespace dualmem
