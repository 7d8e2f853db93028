#include "dualmem/labeling.hpp"

#include <algorithm>
#include <unordered_map>

#include "json.hpp"

namespace dualmem {

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

LabeledProposal label_proposal(const ProposalRecord& d,
                               std::span<const GroundTruthBox> known,
                               std::span<const GroundTruthBox> future,
                               const LabelThresholds& thr) {
  LabeledProposal out;
  out.proposal = d;
  for (const auto& g : future) out.max_iou_future = std::max(out.max_iou_future, iou(d.bbox, g.bbox));
  for (const auto& g : known) out.max_iou_known = std::max(out.max_iou_known, iou(d.bbox, g.bbox));

  if (out.max_iou_future >= thr.match)
    out.label = Label::pos;
  else if (out.max_iou_known >= thr.match)
    out.label = Label::known_as_unknown;
  else if (std::max(out.max_iou_future, out.max_iou_known) < thr.background)
    out.label = Label::neg;
  else
    out.label = Label::amb;
  return out;
}

std::vector<LabeledProposal> label_unknown_stream(std::span<const ProposalRecord> proposals,
                                                  std::span<const GroundTruthBox> groundtruth,
                                                  const LabelThresholds& thr) {
  struct PerImage {
    std::vector<GroundTruthBox> known, future;
  };
  std::unordered_map<std::string, PerImage> by_image;
  for (const auto& g : groundtruth) {
    auto& slot = by_image[g.image_id];
    (g.category == Category::known ? slot.known : slot.future).push_back(g);
  }
  const PerImage empty;
  std::vector<LabeledProposal> out;
  for (const auto& p : proposals) {
    if (p.stream != Stream::unknown) continue;
    auto it = by_image.find(p.image_id);
    const PerImage& gt = it == by_image.end() ? empty : it->second;
    out.push_back(label_proposal(p, gt.known, gt.future, thr));
  }
  return out;
}

std::size_t& LabelCounts::operator[](Label l) {
  switch (l) {
    case Label::pos: return pos;
    case Label::known_as_unknown: return known_as_unknown;
    case Label::neg: return neg;
    case Label::amb: return amb;
  }
  return amb;
}

std::size_t LabelCounts::operator[](Label l) const {
  return const_cast<LabelCounts&>(*this)[l];
}

StreamDecomposition decompose(std::span<const LabeledProposal> proposals, std::size_t image_count) {
  StreamDecomposition d;
  for (const auto& lp : proposals) ++d.counts[lp.label];
  d.total = d.counts.total();
  d.image_count = image_count;
  if (d.total > 0) {
    const double n = static_cast<double>(d.total);
    d.pct_pos = 100.0 * static_cast<double>(d.counts.pos) / n;
    d.pct_known_as_unknown = 100.0 * static_cast<double>(d.counts.known_as_unknown) / n;
    d.pct_neg = 100.0 * static_cast<double>(d.counts.neg) / n;
    d.pct_amb = 100.0 * static_cast<double>(d.counts.amb) / n;
  }
  return d;
}

std::string to_json(const StreamDecomposition& d) {
  using oj = nlohmann::ordered_json;
  auto opt = [](const std::optional<double>& v) { return v ? oj(*v) : oj(nullptr); };
  oj o;
  o["total"] = d.total;
  o["image_count"] = d.image_count;
  o["counts"] = {{"pos", d.counts.pos},
                 {"neg", d.counts.neg},
                 {"known_as_unknown", d.counts.known_as_unknown},
                 {"amb", d.counts.amb}};
  o["percent"] = {{"pos", opt(d.pct_pos)},
                  {"neg", opt(d.pct_neg)},
                  {"known_as_unknown", opt(d.pct_known_as_unknown)},
                  {"amb", opt(d.pct_amb)}};
  return o.dump(2);
}

}  // namespace dualmem
