#include "dualmem/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "dualmem/filtering.hpp"
#include "json.hpp"

namespace dualmem {

std::size_t allowed_exceedances(std::size_t n, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must be in (0,1)");
  if (n == 0) return 0;
  const double nd = static_cast<double>(n);
  auto e = static_cast<std::size_t>(std::floor(alpha * nd));
  // Nudge past rounding in alpha * n so that e / n <= alpha holds exactly as
  // evaluated in double, and e is the largest such count.
  while (e > 0 && static_cast<double>(e) / nd > alpha) --e;
  while (e + 1 < n && static_cast<double>(e + 1) / nd <= alpha) ++e;
  return e;
}

double np_threshold(std::span<const double> scores, double alpha) {
  if (scores.empty()) throw Error("np_threshold: empty score set");
  const std::size_t n = scores.size();
  const std::size_t m = n - allowed_exceedances(n, alpha);  // 1-based order statistic
  std::vector<double> s(scores.begin(), scores.end());
  for (double v : s)
    if (std::isnan(v)) throw Error("np_threshold: NaN score");
  std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(m - 1), s.end());
  return s[m - 1];
}

ScoreSummary summarize_scores(std::span<const double> scores) {
  ScoreSummary out;
  out.n = scores.size();
  if (scores.empty()) return out;
  std::vector<double> s(scores.begin(), scores.end());
  std::sort(s.begin(), s.end());
  out.min = s.front();
  out.max = s.back();
  double acc = 0.0;
  for (double v : s) acc += v;
  out.mean = acc / static_cast<double>(s.size());
  auto q = [&](double p) {
    const auto m = static_cast<std::size_t>(std::ceil(p * static_cast<double>(s.size())));
    return s[std::clamp<std::size_t>(m, 1, s.size()) - 1];
  };
  out.q05 = q(0.05);
  out.q25 = q(0.25);
  out.q50 = q(0.50);
  out.q75 = q(0.75);
  out.q95 = q(0.95);
  return out;
}

Calibration calibrate(const DualMemory& mem, const LrtParams& params, double alpha, std::size_t threads) {
  if (mem.threshold_positives.empty()) throw Error("calibrate: memory has no threshold positives");
  Calibration c;
  c.alpha = alpha;
  c.threshold_scores = lrt_scores(mem.threshold_positives, mem, params, threads);
  c.tau = np_threshold(c.threshold_scores, alpha);
  c.summary = summarize_scores(c.threshold_scores);
  return c;
}

std::string to_json(const Calibration& c) {
  nlohmann::ordered_json o;
  o["alpha"] = c.alpha;
  o["tau"] = c.tau;
  const std::size_t exceed =
      static_cast<std::size_t>(std::count_if(c.threshold_scores.begin(), c.threshold_scores.end(),
                                             [&](double v) { return v > c.tau; }));
  o["calibration_exceedances"] = exceed;
  o["scores"] = {{"n", c.summary.n},         {"min", c.summary.min}, {"max", c.summary.max},
                 {"mean", c.summary.mean},   {"q05", c.summary.q05}, {"q25", c.summary.q25},
                 {"median", c.summary.q50},  {"q75", c.summary.q75}, {"q95", c.summary.q95}};
  return o.dump(2);
}

std::size_t count_images(std::span<const ProposalRecord> proposals, std::span<const GroundTruthBox> groundtruth) {
  std::unordered_set<std::string> ids;
  for (const auto& p : proposals) ids.insert(p.image_id);
  for (const auto& g : groundtruth) ids.insert(g.image_id);
  return ids.size();
}

std::vector<OperatingPoint> alpha_sweep(const DualMemory& mem, const LrtParams& params, const EvalSet& eval,
                                        std::span<const double> alphas, std::size_t threads) {
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] > 0.0 && alphas[i] < 1.0)) throw Error("sweep: every alpha must be in (0,1)");
    if (i > 0 && !(alphas[i] > alphas[i - 1])) throw Error("sweep: alphas must be strictly increasing");
  }
  const std::size_t images = eval.image_count ? eval.image_count : count_images(eval.proposals, eval.groundtruth);

  const auto thr_scores = lrt_scores(mem.threshold_positives, mem, params, threads);
  const auto labeled = label_unknown_stream(eval.proposals, eval.groundtruth);
  std::vector<std::size_t> rows;
  rows.reserve(labeled.size());
  for (const auto& lp : labeled) {
    if (!lp.proposal.embedding_index) throw Error("unknown-stream proposal '" + lp.proposal.id + "' has no embedding");
    if (*lp.proposal.embedding_index >= eval.embeddings.count())
      throw Error("proposal '" + lp.proposal.id + "': embedding_index out of range");
    rows.push_back(static_cast<std::size_t>(*lp.proposal.embedding_index));
  }
  const auto eval_scores = lrt_scores(eval.embeddings, rows, mem, params, threads);

  std::vector<OperatingPoint> out;
  out.reserve(alphas.size());
  for (double a : alphas) {
    OperatingPoint op;
    op.alpha = a;
    op.tau = np_threshold(thr_scores, a);
    std::vector<bool> keep(labeled.size());
    for (std::size_t i = 0; i < labeled.size(); ++i) keep[i] = !suppress_rule(eval_scores[i], op.tau);
    op.metrics = evaluate_labeled(labeled, keep, eval.groundtruth, images);
    out.push_back(std::move(op));
  }
  return out;
}

std::string sweep_to_csv(std::span<const OperatingPoint> points) {
  auto opt = [](const std::optional<double>& v) {
    if (!v) return std::string();
    std::ostringstream s;
    s.precision(17);
    s << *v;
    return s.str();
  };
  std::ostringstream out;
  out.precision(17);
  out << "alpha,tau,fupi,sg,nmh,u_recall,udp,retained_pos,retained_neg,raw_pos,raw_neg\n";
  for (const auto& p : points) {
    const auto& m = p.metrics;
    out << p.alpha << ',' << p.tau << ',' << m.fupi << ',' << opt(m.sg) << ',' << opt(m.nmh) << ','
        << opt(m.u_recall) << ',' << opt(m.udp) << ',' << m.retained.pos << ',' << m.retained.neg << ','
        << m.raw.pos << ',' << m.raw.neg << '\n';
  }
  return out.str();
}

}  // namespace dualmem
