#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dualmem/memory.hpp"

namespace dualmem {

/// Keeps unknown proposals with objectness >= threshold. The decision record
/// stores lambda = -objectness and tau = -threshold so that
/// suppressed == (lambda > tau).
std::vector<FilterDecision> objectness_filter(std::span<const ProposalRecord> proposals, double threshold);

struct KMeansResult {
  EmbeddingMatrix centroids;
  std::vector<std::size_t> assignment;
  /// Sum over rows of (1 - cos(row, assigned centroid)), one entry per
  /// assignment pass.
  std::vector<double> objective;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Spherical k-means: seeded k-means++ seeding, Lloyd iterations with
/// max-cosine assignment (ties to the lower centroid index), centroids
/// renormalized after each update, empty clusters re-seeded from the point
/// farthest from its centroid.
KMeansResult kmeans(const EmbeddingMatrix& rows, std::size_t k, std::uint64_t seed, std::size_t max_iters = 100);

struct PrototypeMemory {
  EmbeddingMatrix positive_centroids;
  EmbeddingMatrix negative_centroids;
  double tau_cos = 0.80;
};

struct PrototypeConfig {
  std::size_t k_pos = 16;
  std::size_t k_neg = 64;
  double tau_cos = 0.80;
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
};

PrototypeMemory build_prototypes(const DualMemory& mem, const PrototypeConfig& cfg = {});

/// Suppress iff max-cos to the negative centroids >= tau_cos AND it exceeds
/// max-cos to the positive centroids. Decisions carry both similarities,
/// lambda = max_cos_neg - max_cos_pos and tau = 0 (the margin cut-off).
std::vector<FilterDecision> prototype_filter(std::span<const ProposalRecord> proposals,
                                             const EmbeddingMatrix& embeddings,
                                             const PrototypeMemory& proto,
                                             std::size_t threads = 0);

}  // namespace dualmem
