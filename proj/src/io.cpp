#include "dualmem/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace dualmem {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  std::string s(buf);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

[[noreturn]] void fail_at(const std::string& source, std::size_t line, const std::string& what) {
  throw Error(source + ":" + std::to_string(line) + ": " + what);
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

bool is_blank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

// Calls fn(json, line_no) for every non-blank line.
template <typename Fn>
void for_each_record(std::istream& in, const std::string& source, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      fail_at(source, line_no, std::string("malformed line: ") + e.what());
    }
    if (!obj.is_object()) fail_at(source, line_no, "malformed line: expected a JSON object");
    try {
      fn(obj, line_no);
    } catch (const Error& e) {
      fail_at(source, line_no, e.what());
    } catch (const json::exception& e) {
      fail_at(source, line_no, std::string("malformed line: ") + e.what());
    }
  }
}

const json& require(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(std::string("missing key '") + key + "'");
  return *it;
}

std::string require_string(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_string()) throw Error(std::string("key '") + key + "' must be a string");
  return v.get<std::string>();
}

double require_number(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_number()) throw Error(std::string("key '") + key + "' must be a number");
  return v.get<double>();
}

BBox parse_bbox(const json& obj) {
  const json& v = require(obj, "bbox");
  if (!v.is_array() || v.size() != 4) throw Error("bbox must be an array of 4 numbers");
  for (const auto& c : v)
    if (!c.is_number()) throw Error("bbox must be an array of 4 numbers");
  BBox b{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
  if (!b.valid()) throw Error("degenerate bbox");
  return b;
}

ordered_json bbox_json(const BBox& b) { return ordered_json::array({b.x1, b.y1, b.x2, b.y2}); }

// Little-endian scalar encode/decode.
template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
bool get_le(std::istream& in, T& v) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) return false;
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  std::memcpy(&v, buf, sizeof(T));
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// proposals
// ---------------------------------------------------------------------------

std::vector<ProposalRecord> parse_proposals(std::istream& in, const std::string& source) {
  std::vector<ProposalRecord> out;
  std::unordered_set<std::string> seen;
  for_each_record(in, source, [&](const json& obj, std::size_t) {
    ProposalRecord p;
    p.id = require_string(obj, "id");
    p.image_id = require_string(obj, "image_id");
    p.bbox = parse_bbox(obj);
    p.objectness = require_number(obj, "objectness");
    if (!(p.objectness >= 0.0 && p.objectness <= 1.0)) throw Error("objectness out of range");
    p.stream = stream_from_string(require_string(obj, "stream"));
    if (auto it = obj.find("embedding_index"); it != obj.end() && !it->is_null()) {
      if (!it->is_number_integer() || it->get<std::int64_t>() < 0)
        throw Error("embedding_index must be a nonnegative integer");
      p.embedding_index = it->get<std::uint64_t>();
    }
    if (!seen.insert(p.id).second) throw Error("duplicate id '" + p.id + "'");
    out.push_back(std::move(p));
  });
  return out;
}

std::vector<ProposalRecord> load_proposals(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_proposals(in, path.string());
}

std::string proposal_to_json(const ProposalRecord& p) {
  ordered_json o;
  o["id"] = p.id;
  o["image_id"] = p.image_id;
  o["bbox"] = bbox_json(p.bbox);
  o["objectness"] = p.objectness;
  o["stream"] = to_string(p.stream);
  if (p.embedding_index) o["embedding_index"] = *p.embedding_index;
  return o.dump();
}

void save_proposals(const std::vector<ProposalRecord>& proposals, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& p : proposals) out << proposal_to_json(p) << '\n';
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// ground truth
// ---------------------------------------------------------------------------

std::vector<GroundTruthBox> parse_groundtruth(std::istream& in, const std::string& source) {
  std::vector<GroundTruthBox> out;
  for_each_record(in, source, [&](const json& obj, std::size_t) {
    GroundTruthBox g;
    g.image_id = require_string(obj, "image_id");
    g.bbox = parse_bbox(obj);
    g.category = category_from_string(require_string(obj, "category"));
    out.push_back(std::move(g));
  });
  return out;
}

std::vector<GroundTruthBox> load_groundtruth(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_groundtruth(in, path.string());
}

void save_groundtruth(const std::vector<GroundTruthBox>& boxes, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& g : boxes) {
    ordered_json o;
    o["image_id"] = g.image_id;
    o["bbox"] = bbox_json(g.bbox);
    o["category"] = to_string(g.category);
    out << o.dump() << '\n';
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// embeddings
// ---------------------------------------------------------------------------

EmbeddingMatrix read_embeddings(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "DMEM", 4) != 0) throw Error("bad magic");
  std::uint32_t version = 0, dim = 0;
  std::uint64_t count = 0;
  if (!get_le(in, version)) throw Error("truncated header");
  if (version != kEmbeddingFormatVersion)
    throw Error("version mismatch: expected " + std::to_string(kEmbeddingFormatVersion) + ", got " +
                std::to_string(version));
  if (!get_le(in, dim) || !get_le(in, count)) throw Error("truncated header");
  if (dim == 0) throw Error("embedding dim must be positive");

  const std::uint64_t n_values = count * dim;
  if (count != 0 && n_values / count != dim) throw Error("header overflow");
  std::vector<float> data(n_values);
  static_assert(sizeof(float) == 4);
  if (n_values > 0) {
    const auto bytes = static_cast<std::streamsize>(n_values * sizeof(float));
    if (!in.read(reinterpret_cast<char*>(data.data()), bytes)) throw Error("truncated payload");
    if constexpr (std::endian::native == std::endian::big) {
      for (float& f : data) {
        auto u = std::bit_cast<std::uint32_t>(f);
        u = (u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24);
        f = std::bit_cast<float>(u);
      }
    }
  }
  EmbeddingMatrix m(dim, std::move(data));
  for (std::size_t i = 0; i < m.count(); ++i) {
    auto r = m.row(i);
    const double n = l2_norm(r);
    if (!std::isfinite(n) || std::abs(n - 1.0) > kNormRejectTolerance)
      throw Error("row " + std::to_string(i) + ": embedding norm " + fmt_real(n) + " outside tolerance");
    if (std::abs(n - 1.0) > kNormExactTolerance)
      for (float& v : r) v = static_cast<float>(v / n);
  }
  return m;
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  EmbeddingMatrix m;
  try {
    m = read_embeddings(in);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error(path.string() + ": trailing bytes after payload");
  return m;
}

void write_embeddings(const EmbeddingMatrix& m, std::ostream& out) {
  out.write("DMEM", 4);
  put_le<std::uint32_t>(out, kEmbeddingFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.dim()));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.count()));
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(m.data().data()),
              static_cast<std::streamsize>(m.data().size() * sizeof(float)));
  } else {
    for (float f : m.data()) put_le(out, f);
  }
}

void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  auto out = open_out(path, std::ios::binary);
  write_embeddings(m, out);
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// decisions
// ---------------------------------------------------------------------------

std::string decision_to_json(const FilterDecision& d) {
  ordered_json o;
  o["id"] = d.id;
  o["lambda"] = d.lambda ? ordered_json(*d.lambda) : ordered_json(nullptr);
  o["tau"] = d.tau;
  o["suppressed"] = d.suppressed;
  if (d.label) o["label"] = to_string(*d.label);
  if (d.max_cos_neg) o["max_cos_neg"] = *d.max_cos_neg;
  if (d.max_cos_pos) o["max_cos_pos"] = *d.max_cos_pos;
  return o.dump();
}

void write_decisions(const std::vector<FilterDecision>& decisions, std::ostream& out) {
  for (const auto& d : decisions) out << decision_to_json(d) << '\n';
}

void save_decisions(const std::vector<FilterDecision>& decisions, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_decisions(decisions, out);
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

std::vector<FilterDecision> parse_decisions(std::istream& in, const std::string& source) {
  std::vector<FilterDecision> out;
  std::unordered_set<std::string> seen;
  for_each_record(in, source, [&](const json& obj, std::size_t) {
    FilterDecision d;
    d.id = require_string(obj, "id");
    const json& lam = require(obj, "lambda");
    if (!lam.is_null()) {
      if (!lam.is_number()) throw Error("key 'lambda' must be a number or null");
      d.lambda = lam.get<double>();
    }
    d.tau = require_number(obj, "tau");
    const json& sup = require(obj, "suppressed");
    if (!sup.is_boolean()) throw Error("key 'suppressed' must be a boolean");
    d.suppressed = sup.get<bool>();
    if (auto it = obj.find("label"); it != obj.end() && !it->is_null())
      d.label = label_from_string(it->get<std::string>());
    if (auto it = obj.find("max_cos_neg"); it != obj.end() && !it->is_null()) d.max_cos_neg = it->get<double>();
    if (auto it = obj.find("max_cos_pos"); it != obj.end() && !it->is_null()) d.max_cos_pos = it->get<double>();
    if (!seen.insert(d.id).second) throw Error("duplicate id '" + d.id + "'");
    out.push_back(std::move(d));
  });
  return out;
}

std::vector<FilterDecision> load_decisions(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_decisions(in, path.string());
}

// ---------------------------------------------------------------------------
// labels
// ---------------------------------------------------------------------------

void save_labels(const std::vector<LabeledProposal>& labeled, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& lp : labeled) {
    ordered_json o;
    o["id"] = lp.proposal.id;
    o["image_id"] = lp.proposal.image_id;
    o["label"] = to_string(lp.label);
    o["max_iou_future"] = lp.max_iou_future;
    o["max_iou_known"] = lp.max_iou_known;
    out << o.dump() << '\n';
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

std::vector<LabeledProposal> load_labels(const std::filesystem::path& path,
                                         const std::vector<ProposalRecord>& proposals) {
  std::unordered_map<std::string, const ProposalRecord*> by_id;
  for (const auto& p : proposals) by_id.emplace(p.id, &p);
  auto in = open_in(path);
  std::vector<LabeledProposal> out;
  for_each_record(in, path.string(), [&](const json& obj, std::size_t) {
    const std::string id = require_string(obj, "id");
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error("label refers to unknown proposal id '" + id + "'");
    LabeledProposal lp;
    lp.proposal = *it->second;
    lp.label = label_from_string(require_string(obj, "label"));
    lp.max_iou_future = require_number(obj, "max_iou_future");
    lp.max_iou_known = require_number(obj, "max_iou_known");
    out.push_back(std::move(lp));
  });
  return out;
}

void validate_embedding_refs(const std::vector<ProposalRecord>& proposals,
                             const EmbeddingMatrix& embeddings,
                             bool require_unknown_embeddings) {
  for (const auto& p : proposals) {
    if (p.embedding_index) {
      if (*p.embedding_index >= embeddings.count())
        throw Error("proposal '" + p.id + "': embedding_index " + std::to_string(*p.embedding_index) +
                    " out of range (matrix has " + std::to_string(embeddings.count()) + " rows)");
    } else if (require_unknown_embeddings && p.stream == Stream::unknown) {
      throw Error("unknown-stream proposal '" + p.id + "' has no embedding");
    }
  }
}

}  // namespace dualmem
