#include "dualmem/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "json.hpp"

namespace dualmem {

LabelCounts count_labels(std::span<const LabeledProposal> labeled) {
  LabelCounts c;
  for (const auto& lp : labeled) ++c[lp.label];
  return c;
}

double fupi(const LabelCounts& retained, std::size_t image_count) {
  if (image_count == 0) throw Error("fupi: image_count must be positive");
  return static_cast<double>(retained.neg) / static_cast<double>(image_count);
}

std::optional<double> suppression_gain(const LabelCounts& raw, const LabelCounts& retained) {
  if (raw.neg == 0) return std::nullopt;
  return 1.0 - static_cast<double>(retained.neg) / static_cast<double>(raw.neg);
}

std::optional<double> nmh(const LabelCounts& raw, const LabelCounts& retained) {
  if (raw.pos == 0) return std::nullopt;
  if (retained.pos > raw.pos) throw Error("nmh: retained set has more positives than the raw stream");
  return static_cast<double>(raw.pos - retained.pos) / static_cast<double>(raw.pos);
}

std::optional<double> udp(const LabelCounts& retained) {
  const std::size_t denom = retained.pos + retained.neg;
  if (denom == 0) return std::nullopt;
  return static_cast<double>(retained.pos) / static_cast<double>(denom);
}

namespace {

struct RecallCount {
  std::size_t future = 0;
  std::size_t hit = 0;
};

RecallCount count_recall(std::span<const ProposalRecord> retained, std::span<const GroundTruthBox> groundtruth,
                         double match_iou) {
  std::unordered_map<std::string, std::vector<const BBox*>> preds;
  for (const auto& p : retained)
    if (p.stream == Stream::unknown) preds[p.image_id].push_back(&p.bbox);
  RecallCount rc;
  for (const auto& g : groundtruth) {
    if (g.category != Category::future) continue;
    ++rc.future;
    auto it = preds.find(g.image_id);
    if (it == preds.end()) continue;
    for (const BBox* b : it->second) {
      if (iou(*b, g.bbox) >= match_iou) {
        ++rc.hit;
        break;
      }
    }
  }
  return rc;
}

}  // namespace

std::optional<double> u_recall(std::span<const ProposalRecord> retained, std::span<const GroundTruthBox> groundtruth,
                               double match_iou) {
  const RecallCount rc = count_recall(retained, groundtruth, match_iou);
  if (rc.future == 0) return std::nullopt;
  return static_cast<double>(rc.hit) / static_cast<double>(rc.future);
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw Error("auroc: scores and labels differ in length");
  std::uint64_t n_pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw Error("auroc: NaN score");
    if (labels[i]) ++n_pos;
  }
  const std::uint64_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error("auroc: need at least one positive and one negative");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the positive rank sum, with mid-ranks for ties; stays integral.
  std::uint64_t rank_sum_x2 = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::uint64_t pos_in_group = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]]) ++pos_in_group;
      ++j;
    }
    // 1-based ranks i+1 .. j, mid-rank (i+1+j)/2.
    rank_sum_x2 += pos_in_group * static_cast<std::uint64_t>(i + 1 + j);
    i = j;
  }
  const std::uint64_t u_x2 = rank_sum_x2 - n_pos * (n_pos + 1);
  return static_cast<double>(u_x2) / static_cast<double>(2 * n_pos * n_neg);
}

double auroc(std::span<const double> positives, std::span<const double> negatives) {
  std::vector<double> scores(positives.begin(), positives.end());
  scores.insert(scores.end(), negatives.begin(), negatives.end());
  std::vector<std::uint8_t> labels(scores.size(), 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(positives.size()), 1);
  return auroc(scores, labels);
}

double overlap_coefficient(std::span<const double> a, std::span<const double> b, std::size_t bins) {
  if (a.empty() || b.empty()) throw Error("overlap_coefficient: empty input");
  if (bins == 0) throw Error("overlap_coefficient: bins must be positive");
  double lo = a[0], hi = a[0];
  for (auto s : {a, b})
    for (double v : s) {
      if (!std::isfinite(v)) throw Error("overlap_coefficient: non-finite value");
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (hi == lo) return 1.0;

  const double width = (hi - lo) / static_cast<double>(bins);
  auto histogram = [&](std::span<const double> s) {
    std::vector<double> h(bins, 0.0);
    for (double v : s) {
      auto b = static_cast<std::size_t>(std::floor((v - lo) / width));
      ++h[std::min(b, bins - 1)];
    }
    for (double& x : h) x /= static_cast<double>(s.size());
    return h;
  };
  const auto p = histogram(a);
  const auto q = histogram(b);
  double ovl = 0.0;
  for (std::size_t i = 0; i < bins; ++i) ovl += std::min(p[i], q[i]);
  return std::min(ovl, 1.0);
}

MetricsReport evaluate_labeled(std::span<const LabeledProposal> labeled,
                               const std::vector<bool>& retained,
                               std::span<const GroundTruthBox> groundtruth,
                               std::size_t image_count) {
  if (retained.size() != labeled.size()) throw Error("evaluate: retained mask size mismatch");
  MetricsReport r;
  r.image_count = image_count;
  std::vector<ProposalRecord> kept;
  kept.reserve(labeled.size());
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    ++r.raw[labeled[i].label];
    if (retained[i]) {
      ++r.retained[labeled[i].label];
      kept.push_back(labeled[i].proposal);
    }
  }
  r.fupi = fupi(r.retained, image_count);
  r.sg = suppression_gain(r.raw, r.retained);
  r.nmh = nmh(r.raw, r.retained);
  r.udp = udp(r.retained);
  const RecallCount rc = count_recall(kept, groundtruth, 0.5);
  r.future_gt = rc.future;
  r.future_gt_recalled = rc.hit;
  if (rc.future > 0) r.u_recall = static_cast<double>(rc.hit) / static_cast<double>(rc.future);
  return r;
}

MetricsReport evaluate(std::span<const ProposalRecord> proposals,
                       std::span<const GroundTruthBox> groundtruth,
                       const std::vector<FilterDecision>* decisions,
                       std::size_t image_count,
                       const LabelThresholds& thr) {
  const auto labeled = label_unknown_stream(proposals, groundtruth, thr);
  std::vector<bool> keep(labeled.size(), true);
  if (decisions) {
    std::unordered_map<std::string, bool> suppressed;
    for (const auto& d : *decisions) suppressed.emplace(d.id, d.suppressed);
    for (std::size_t i = 0; i < labeled.size(); ++i) {
      auto it = suppressed.find(labeled[i].proposal.id);
      if (it == suppressed.end())
        throw Error("no decision for unknown-stream proposal '" + labeled[i].proposal.id + "'");
      keep[i] = !it->second;
    }
  }
  return evaluate_labeled(labeled, keep, groundtruth, image_count);
}

std::string to_json(const MetricsReport& r) {
  using oj = nlohmann::ordered_json;
  auto opt = [](const std::optional<double>& v) { return v ? oj(*v) : oj(nullptr); };
  auto counts = [](const LabelCounts& c) {
    return oj{{"pos", c.pos}, {"neg", c.neg}, {"known_as_unknown", c.known_as_unknown}, {"amb", c.amb}};
  };
  oj o;
  o["fupi"] = r.fupi;
  o["sg"] = opt(r.sg);
  o["nmh"] = opt(r.nmh);
  o["u_recall"] = opt(r.u_recall);
  o["udp"] = opt(r.udp);
  o["image_count"] = r.image_count;
  o["future_gt"] = r.future_gt;
  o["future_gt_recalled"] = r.future_gt_recalled;
  o["raw_counts"] = counts(r.raw);
  o["retained_counts"] = counts(r.retained);
  return o.dump(2);
}

}  // namespace dualmem
