#include "dualmem/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dualmem/parallel.hpp"
#include "dualmem/random.hpp"

namespace dualmem {

std::vector<FilterDecision> objectness_filter(std::span<const ProposalRecord> proposals, double threshold) {
  std::vector<FilterDecision> out;
  out.reserve(proposals.size());
  for (const auto& p : proposals) {
    FilterDecision d;
    d.id = p.id;
    d.tau = -threshold;
    if (p.stream == Stream::unknown) {
      d.lambda = -p.objectness;
      d.suppressed = !(p.objectness >= threshold);
    }
    out.push_back(std::move(d));
  }
  return out;
}

namespace {

std::size_t nearest_centroid(std::span<const float> x, const EmbeddingMatrix& centroids, double* best_sim) {
  std::size_t best = 0;
  double sim = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.count(); ++c) {
    const double s = dot(x, centroids.row(c));
    if (s > sim) {
      sim = s;
      best = c;
    }
  }
  if (best_sim) *best_sim = sim;
  return best;
}

EmbeddingMatrix seed_plus_plus(const EmbeddingMatrix& rows, std::size_t k, Rng& rng) {
  const std::size_t n = rows.count();
  std::vector<std::size_t> chosen;
  std::vector<bool> taken(n, false);
  chosen.push_back(static_cast<std::size_t>(rng.below(n)));
  taken[chosen.back()] = true;

  // Squared Euclidean distance between unit vectors: 2 - 2 cos.
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = std::max(0.0, 2.0 - 2.0 * dot(rows.row(i), rows.row(chosen[0])));

  while (chosen.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (!taken[i]) total += d2[i];
    std::size_t pick = n;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i] || d2[i] <= 0.0) continue;
        pick = i;
        u -= d2[i];
        if (u < 0.0) break;
      }
    } else {
      // Every remaining row duplicates a chosen one.
      std::size_t r = static_cast<std::size_t>(rng.below(n - chosen.size()));
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i]) continue;
        if (r-- == 0) {
          pick = i;
          break;
        }
      }
    }
    chosen.push_back(pick);
    taken[pick] = true;
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], std::max(0.0, 2.0 - 2.0 * dot(rows.row(i), rows.row(pick))));
  }
  return rows.select(chosen);
}

double objective_of(const EmbeddingMatrix& rows, const EmbeddingMatrix& centroids,
                    const std::vector<std::size_t>& assignment) {
  double acc = 0.0;
  for (std::size_t i = 0; i < rows.count(); ++i) acc += 1.0 - dot(rows.row(i), centroids.row(assignment[i]));
  return acc;
}

}  // namespace

KMeansResult kmeans(const EmbeddingMatrix& rows, std::size_t k, std::uint64_t seed, std::size_t max_iters) {
  if (k == 0) throw Error("kmeans: K must be positive");
  if (rows.count() < k)
    throw Error("kmeans: need at least K=" + std::to_string(k) + " rows, got " + std::to_string(rows.count()));
  if (max_iters == 0) throw Error("kmeans: max_iters must be positive");

  const std::size_t n = rows.count();
  const std::size_t dim = rows.dim();
  Rng rng(seed);

  KMeansResult res;
  res.centroids = seed_plus_plus(rows, k, rng);
  res.assignment.resize(n);
  std::vector<double> sim(n);
  auto assign = [&](std::vector<std::size_t>& a) {
    for (std::size_t i = 0; i < n; ++i) a[i] = nearest_centroid(rows.row(i), res.centroids, &sim[i]);
  };
  assign(res.assignment);
  res.objective.push_back(objective_of(rows, res.centroids, res.assignment));

  std::vector<std::size_t> next(n);
  std::vector<double> sum(dim);
  std::vector<std::size_t> members(k);
  for (std::size_t it = 1; it <= max_iters; ++it) {
    std::fill(members.begin(), members.end(), 0);
    for (std::size_t a : res.assignment) ++members[a];

    // Re-seed empty clusters with the worst-fit point of a multi-member cluster.
    for (std::size_t c = 0; c < k; ++c) {
      if (members[c] != 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (members[res.assignment[i]] < 2) continue;
        if (far == n || sim[i] < sim[far]) far = i;
      }
      if (far == n) break;
      --members[res.assignment[far]];
      res.assignment[far] = c;
      members[c] = 1;
      sim[far] = 1.0;
    }

    for (std::size_t c = 0; c < k; ++c) {
      std::fill(sum.begin(), sum.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (res.assignment[i] != c) continue;
        auto r = rows.row(i);
        for (std::size_t j = 0; j < dim; ++j) sum[j] += r[j];
      }
      double ss = 0.0;
      for (double v : sum) ss += v * v;
      const double norm = std::sqrt(ss);
      if (!(norm > 0.0)) continue;  // keep the old centroid
      auto out = res.centroids.row(c);
      for (std::size_t j = 0; j < dim; ++j) out[j] = static_cast<float>(sum[j] / norm);
    }

    assign(next);
    res.objective.push_back(objective_of(rows, res.centroids, next));
    res.iterations = it;
    if (next == res.assignment) {
      res.converged = true;
      break;
    }
    res.assignment.swap(next);
  }
  return res;
}

PrototypeMemory build_prototypes(const DualMemory& mem, const PrototypeConfig& cfg) {
  PrototypeMemory p;
  p.positive_centroids = kmeans(mem.positive, cfg.k_pos, cfg.seed, cfg.max_iters).centroids;
  p.negative_centroids = kmeans(mem.negative, cfg.k_neg, cfg.seed, cfg.max_iters).centroids;
  p.tau_cos = cfg.tau_cos;
  return p;
}

std::vector<FilterDecision> prototype_filter(std::span<const ProposalRecord> proposals,
                                             const EmbeddingMatrix& embeddings,
                                             const PrototypeMemory& proto,
                                             std::size_t threads) {
  if (proto.positive_centroids.empty() || proto.negative_centroids.empty())
    throw Error("prototype_filter: empty centroid set");
  std::vector<FilterDecision> out(proposals.size());
  parallel_for(
      proposals.size(),
      [&](std::size_t i) {
        const auto& p = proposals[i];
        FilterDecision& d = out[i];
        d.id = p.id;
        d.tau = 0.0;
        if (p.stream != Stream::unknown) return;
        if (!p.embedding_index) throw Error("unknown-stream proposal '" + p.id + "' has no embedding");
        if (*p.embedding_index >= embeddings.count())
          throw Error("proposal '" + p.id + "': embedding_index out of range");
        auto q = embeddings.row(static_cast<std::size_t>(*p.embedding_index));
        const double neg = max_cosine(q, proto.negative_centroids);
        const double pos = max_cosine(q, proto.positive_centroids);
        d.max_cos_neg = neg;
        d.max_cos_pos = pos;
        d.lambda = neg - pos;
        d.suppressed = neg >= proto.tau_cos && neg > pos;
      },
      threads);
  return out;
}

}  // namespace dualmem
