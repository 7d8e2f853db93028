#include "dualmem/memory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "dualmem/io.hpp"
#include "dualmem/parallel.hpp"
#include "dualmem/random.hpp"
#include "json.hpp"

namespace dualmem {

void LrtParams::validate() const {
  if (k < 1) throw Error("k must be >= 1");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw Error("temperature must be positive and finite");
}

std::size_t memory_subset_size(std::size_t n, double split_fraction) {
  if (n < 2) throw Error("need at least 2 calibration positives, got " + std::to_string(n));
  const auto m = static_cast<std::size_t>(std::llround(split_fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(m, 1, n - 1);
}

DualMemory build_memory(std::span<const LabeledProposal> calibration,
                        const EmbeddingMatrix& embeddings,
                        double split_fraction,
                        std::uint64_t seed,
                        const std::string& split_id) {
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw Error("split_fraction must be in (0,1)");

  auto embedding_row = [&](const LabeledProposal& lp) -> std::size_t {
    const auto& p = lp.proposal;
    if (!p.embedding_index) throw Error("calibration proposal '" + p.id + "' has no embedding");
    if (*p.embedding_index >= embeddings.count())
      throw Error("calibration proposal '" + p.id + "': embedding_index out of range");
    return static_cast<std::size_t>(*p.embedding_index);
  };

  std::vector<std::size_t> pos_rows, neg_rows;
  for (const auto& lp : calibration) {
    if (lp.label == Label::pos) pos_rows.push_back(embedding_row(lp));
    else if (lp.label == Label::neg) neg_rows.push_back(embedding_row(lp));
  }
  if (pos_rows.size() < 2)
    throw Error("need at least 2 calibration positives, got " + std::to_string(pos_rows.size()));
  if (neg_rows.empty()) throw Error("no calibration negatives");

  Rng rng(seed);
  rng.shuffle(pos_rows);
  const std::size_t n_mem = memory_subset_size(pos_rows.size(), split_fraction);
  std::span<const std::size_t> all(pos_rows);

  DualMemory mem;
  mem.positive = embeddings.select(all.first(n_mem));
  mem.threshold_positives = embeddings.select(all.subspan(n_mem));
  mem.negative = embeddings.select(neg_rows);
  mem.provenance = {split_id, split_fraction, seed};
  return mem;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double hi = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double v : values) s += std::exp(v - hi);
  return hi + std::log(s);
}

namespace {

struct Neighbor {
  double sim;
  std::size_t index;
};

// Higher similarity first; equal similarity resolved by lower row index.
bool closer(const Neighbor& a, const Neighbor& b) {
  return a.sim > b.sim || (a.sim == b.sim && a.index < b.index);
}

}  // namespace

double knn_logdensity(std::span<const float> query, const EmbeddingMatrix& memory, const LrtParams& params) {
  params.validate();
  if (memory.empty()) throw Error("knn_logdensity: empty memory");
  if (query.size() != memory.dim()) throw Error("knn_logdensity: query/memory dimension mismatch");

  thread_local std::vector<Neighbor> cand;
  const std::size_t n = memory.count();
  cand.resize(n);
  for (std::size_t i = 0; i < n; ++i) cand[i] = {dot(query, memory.row(i)), i};

  const std::size_t kk = std::min(params.k, n);
  if (kk < n) std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk), cand.end(), closer);
  std::sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk), closer);

  // cand[0] holds the largest exponent.
  const double inv_t = 1.0 / params.temperature;
  const double top = cand[0].sim * inv_t;
  double acc = 0.0;
  for (std::size_t i = 0; i < kk; ++i) acc += std::exp(cand[i].sim * inv_t - top);
  return top + std::log(acc) - std::log(static_cast<double>(kk));
}

double lrt_score(std::span<const float> query, const DualMemory& mem, const LrtParams& params) {
  return knn_logdensity(query, mem.negative, params) - knn_logdensity(query, mem.positive, params);
}

std::vector<double> lrt_scores(const EmbeddingMatrix& embeddings, std::span<const std::size_t> rows,
                               const DualMemory& mem, const LrtParams& params, std::size_t threads) {
  params.validate();
  if (mem.positive.empty() || mem.negative.empty()) throw Error("lrt_scores: both memories must be nonempty");
  if (embeddings.count() > 0 && embeddings.dim() != mem.dim())
    throw Error("embedding dim " + std::to_string(embeddings.dim()) + " does not match memory dim " +
                std::to_string(mem.dim()));
  std::vector<double> out(rows.size());
  parallel_for(
      rows.size(), [&](std::size_t i) { out[i] = lrt_score(embeddings.row(rows[i]), mem, params); }, threads);
  return out;
}

std::vector<double> lrt_scores(const EmbeddingMatrix& queries, const DualMemory& mem, const LrtParams& params,
                               std::size_t threads) {
  std::vector<std::size_t> rows(queries.count());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return lrt_scores(queries, rows, mem, params, threads);
}

double max_cosine(std::span<const float> query, const EmbeddingMatrix& memory) {
  if (memory.empty()) throw Error("max_cosine: empty memory");
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < memory.count(); ++i) best = std::max(best, dot(query, memory.row(i)));
  return best;
}

FusionMode fusion_mode_from_string(std::string_view s) {
  if (s == "concat") return FusionMode::concat;
  if (s == "average" || s == "avg") return FusionMode::average;
  throw Error("invalid fusion mode '" + std::string(s) + "'");
}

EmbeddingMatrix fuse_embeddings(const EmbeddingMatrix& a, const EmbeddingMatrix& b, FusionMode mode) {
  if (a.count() != b.count())
    throw Error("fuse: row count mismatch (" + std::to_string(a.count()) + " vs " + std::to_string(b.count()) + ")");
  if (mode == FusionMode::average && a.dim() != b.dim())
    throw Error("fuse: average needs equal dims (" + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) + ")");

  const std::size_t dim = mode == FusionMode::concat ? a.dim() + b.dim() : a.dim();
  std::vector<float> data;
  data.reserve(dim * a.count());
  std::vector<double> buf(dim);
  for (std::size_t i = 0; i < a.count(); ++i) {
    auto ra = a.row(i);
    auto rb = b.row(i);
    if (mode == FusionMode::concat) {
      std::copy(ra.begin(), ra.end(), buf.begin());
      std::copy(rb.begin(), rb.end(), buf.begin() + static_cast<std::ptrdiff_t>(ra.size()));
    } else {
      for (std::size_t j = 0; j < dim; ++j) buf[j] = 0.5 * (static_cast<double>(ra[j]) + rb[j]);
    }
    double ss = 0.0;
    for (double v : buf) ss += v * v;
    const double n = std::sqrt(ss);
    if (!(n > 0.0)) throw Error("fuse: row " + std::to_string(i) + " fuses to the zero vector");
    for (double v : buf) data.push_back(static_cast<float>(v / n));
  }
  return EmbeddingMatrix(dim, std::move(data));
}

void save_memory(const DualMemory& mem, const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  header["format"] = "dualmem-memory";
  header["version"] = 1;
  header["dim"] = mem.dim();
  header["split_id"] = mem.provenance.split_id;
  header["split_fraction"] = mem.provenance.split_fraction;
  header["seed"] = mem.provenance.seed;
  header["sections"] = {{{"name", "positive"}, {"count", mem.positive.count()}},
                        {{"name", "negative"}, {"count", mem.negative.count()}},
                        {{"name", "threshold_positives"}, {"count", mem.threshold_positives.count()}}};

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << header.dump() << '\n';
  write_embeddings(mem.positive, out);
  write_embeddings(mem.negative, out);
  write_embeddings(mem.threshold_positives, out);
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

DualMemory load_memory(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + ": missing memory header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": malformed memory header: " + e.what());
  }
  if (header.value("format", "") != "dualmem-memory" || header.value("version", 0) != 1)
    throw Error(path.string() + ": not a version-1 dualmem memory file");

  DualMemory mem;
  try {
    mem.positive = read_embeddings(in);
    mem.negative = read_embeddings(in);
    mem.threshold_positives = read_embeddings(in);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
  mem.provenance.split_id = header.value("split_id", "");
  mem.provenance.split_fraction = header.value("split_fraction", 0.0);
  mem.provenance.seed = header.value("seed", std::uint64_t{0});

  const auto& sections = header.at("sections");
  const std::size_t counts[3] = {mem.positive.count(), mem.negative.count(), mem.threshold_positives.count()};
  for (std::size_t i = 0; i < 3; ++i)
    if (sections.at(i).at("count").get<std::size_t>() != counts[i])
      throw Error(path.string() + ": section count does not match header");
  if (mem.negative.dim() != mem.positive.dim() || mem.threshold_positives.dim() != mem.positive.dim())
    throw Error(path.string() + ": memory sections disagree on dim");
  return mem;
}

}  // namespace dualmem
