#include "dualmem/synth.hpp"

#include <algorithm>
#include <cmath>

#include "dualmem/io.hpp"
#include "dualmem/random.hpp"
#include "json.hpp"

namespace dualmem {

namespace {

enum class Slot { pos, known_as_unknown, amb, neg, known_stream, missed_future };

using Vec = std::vector<double>;

void normalize(Vec& v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  const double n = std::sqrt(ss);
  for (double& x : v) x /= n;
}

Vec random_unit(std::size_t dim, Rng& rng) {
  Vec v(dim);
  do {
    for (double& x : v) x = rng.normal();
  } while (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }));
  normalize(v);
  return v;
}

// Removes the components along `basis` (assumed orthonormal).
void orthogonalize(Vec& v, const std::vector<Vec>& basis) {
  for (const auto& b : basis) {
    double d = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) d += v[j] * b[j];
    for (std::size_t j = 0; j < v.size(); ++j) v[j] -= d * b[j];
  }
}

// `count` unit directions, mutually orthogonal while count <= dim.
std::vector<Vec> make_directions(std::size_t count, std::size_t dim, Rng& rng) {
  std::vector<Vec> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Vec v = random_unit(dim, rng);
    if (out.size() < dim) {
      for (int attempt = 0; attempt < 8; ++attempt) {
        Vec w = v;
        orthogonalize(w, out);
        double ss = 0.0;
        for (double x : w) ss += x * x;
        if (ss > 1e-8) {
          v = std::move(w);
          normalize(v);
          break;
        }
        v = random_unit(dim, rng);
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

Vec twin_direction(const Vec& base, double cosine, std::size_t dim, Rng& rng) {
  Vec u = random_unit(dim, rng);
  orthogonalize(u, {base});
  normalize(u);
  const double s = std::sqrt(std::max(0.0, 1.0 - cosine * cosine));
  Vec out(dim);
  for (std::size_t j = 0; j < dim; ++j) out[j] = cosine * base[j] + s * u[j];
  normalize(out);
  return out;
}

std::vector<float> sample_around(const Vec& dir, double spread, Rng& rng) {
  const double scale = spread / std::sqrt(static_cast<double>(dir.size()));
  Vec v(dir.size());
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = dir[j] + scale * rng.normal();
  normalize(v);
  return {v.begin(), v.end()};
}

}  // namespace

void SynthConfig::validate() const {
  if (dim < 2) throw Error("synth: dim must be >= 2");
  if (images == 0) throw Error("synth: images must be positive");
  if (pos_modes == 0 || neg_modes == 0) throw Error("synth: mode counts must be positive");
  if (!(spread >= 0.0)) throw Error("synth: spread must be nonnegative");
  if (!(hard_negative_fraction >= 0.0 && hard_negative_fraction <= 1.0))
    throw Error("synth: hard_negative_fraction must be in [0,1]");
  if (!(hard_negative_cos >= -1.0 && hard_negative_cos <= 1.0)) throw Error("synth: hard_negative_cos must be in [-1,1]");
  for (const auto& r : {pos_objectness, neg_objectness, other_objectness})
    if (!(r.lo >= 0.0 && r.hi <= 1.0 && r.lo <= r.hi)) throw Error("synth: objectness range must lie in [0,1]");
}

SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t slots_total =
      cfg.n_pos + cfg.n_neg + cfg.n_known_as_unknown + cfg.n_amb + cfg.n_known_stream + cfg.n_missed_future;
  if (slots_total > cfg.images * kSynthCellsPerImage)
    throw Error("synth: impossible geometry: " + std::to_string(slots_total) + " items do not fit in " +
                std::to_string(cfg.images) + " images of " + std::to_string(kSynthCellsPerImage) + " cells");

  Rng rng(cfg.seed);
  Rng geometry(cfg.direction_seed.value_or(cfg.seed));

  // Directions: positive modes, negative modes, known-as-unknown, ambiguous.
  const std::size_t n_dirs = cfg.pos_modes + cfg.neg_modes + 2;
  std::vector<Vec> dirs;
  if (cfg.shared_direction) {
    dirs.assign(n_dirs, random_unit(cfg.dim, geometry));
  } else {
    dirs = make_directions(n_dirs, cfg.dim, geometry);
  }
  std::vector<Vec> pos_dirs(dirs.begin(), dirs.begin() + static_cast<std::ptrdiff_t>(cfg.pos_modes));
  std::vector<Vec> neg_dirs(dirs.begin() + static_cast<std::ptrdiff_t>(cfg.pos_modes),
                            dirs.begin() + static_cast<std::ptrdiff_t>(cfg.pos_modes + cfg.neg_modes));
  const Vec& kau_dir = dirs[cfg.pos_modes + cfg.neg_modes];
  const Vec& amb_dir = dirs[cfg.pos_modes + cfg.neg_modes + 1];
  std::vector<Vec> twin_dirs;
  if (cfg.hard_negative_fraction > 0.0)
    for (const auto& d : pos_dirs)
      twin_dirs.push_back(cfg.shared_direction ? d : twin_direction(d, cfg.hard_negative_cos, cfg.dim, geometry));

  std::vector<Slot> slots;
  slots.reserve(slots_total);
  slots.insert(slots.end(), cfg.n_pos, Slot::pos);
  slots.insert(slots.end(), cfg.n_known_as_unknown, Slot::known_as_unknown);
  slots.insert(slots.end(), cfg.n_amb, Slot::amb);
  slots.insert(slots.end(), cfg.n_neg, Slot::neg);
  slots.insert(slots.end(), cfg.n_known_stream, Slot::known_stream);
  slots.insert(slots.end(), cfg.n_missed_future, Slot::missed_future);
  rng.shuffle(slots);

  const auto n_hard = static_cast<std::size_t>(std::llround(cfg.hard_negative_fraction * static_cast<double>(cfg.n_neg)));

  SynthData out;
  out.embeddings = EmbeddingMatrix(cfg.dim, std::size_t{0});
  std::size_t pos_i = 0, neg_i = 0, prop_i = 0;
  for (std::size_t s = 0; s < slots.size(); ++s) {
    const std::size_t image = s % cfg.images;
    const std::size_t cell = s / cfg.images;
    const double cx = 100.0 * static_cast<double>(cell % 10);
    const double cy = 100.0 * static_cast<double>(cell / 10);
    const std::string image_id = cfg.image_prefix + std::to_string(image);
    const BBox gt_box{cx + 10.0, cy + 10.0, cx + 90.0, cy + 90.0};

    auto shifted = [&]() {
      const double dx = std::floor(rng.uniform(0.0, 9.0));
      const double dy = std::floor(rng.uniform(0.0, 9.0));
      return BBox{gt_box.x1 + dx, gt_box.y1 + dy, gt_box.x2 + dx, gt_box.y2 + dy};
    };
    auto objectness = [&](const ObjectnessRange& r) { return rng.uniform(r.lo, r.hi); };
    auto add_proposal = [&](const BBox& b, double obj, Stream stream, const Vec* dir, std::optional<Label> label) {
      ProposalRecord p;
      p.id = cfg.id_prefix + std::to_string(prop_i++);
      p.image_id = image_id;
      p.bbox = b;
      p.objectness = obj;
      p.stream = stream;
      if (dir) {
        p.embedding_index = out.embeddings.count();
        out.embeddings.append(sample_around(*dir, cfg.spread, rng));
      }
      out.proposals.push_back(std::move(p));
      out.intended.push_back(label);
    };

    switch (slots[s]) {
      case Slot::pos: {
        out.groundtruth.push_back({image_id, gt_box, Category::future});
        const Vec& d = pos_dirs[pos_i++ % cfg.pos_modes];
        add_proposal(shifted(), objectness(cfg.pos_objectness), Stream::unknown, &d, Label::pos);
        break;
      }
      case Slot::known_as_unknown:
        out.groundtruth.push_back({image_id, gt_box, Category::known});
        add_proposal(shifted(), objectness(cfg.other_objectness), Stream::unknown, &kau_dir, Label::known_as_unknown);
        break;
      case Slot::amb: {
        const Category c = rng.below(2) == 0 ? Category::known : Category::future;
        out.groundtruth.push_back({image_id, gt_box, c});
        // 80 x 32 inside an 80 x 80 box: IoU = 2560 / 6400 = 0.4.
        const BBox b{gt_box.x1, gt_box.y1, gt_box.x2, gt_box.y1 + 32.0};
        add_proposal(b, objectness(cfg.other_objectness), Stream::unknown, &amb_dir, Label::amb);
        break;
      }
      case Slot::neg: {
        const std::size_t k = neg_i++;
        const Vec& d = k < n_hard ? twin_dirs[k % twin_dirs.size()] : neg_dirs[k % cfg.neg_modes];
        const double w = std::floor(rng.uniform(30.0, 81.0));
        const double h = std::floor(rng.uniform(30.0, 81.0));
        const double x = cx + 10.0 + std::floor(rng.uniform(0.0, 81.0 - w));
        const double y = cy + 10.0 + std::floor(rng.uniform(0.0, 81.0 - h));
        add_proposal({x, y, x + w, y + h}, objectness(cfg.neg_objectness), Stream::unknown, &d, Label::neg);
        break;
      }
      case Slot::known_stream:
        out.groundtruth.push_back({image_id, gt_box, Category::known});
        add_proposal(shifted(), objectness(cfg.other_objectness), Stream::known, nullptr, std::nullopt);
        break;
      case Slot::missed_future:
        out.groundtruth.push_back({image_id, gt_box, Category::future});
        break;
    }
  }
  return out;
}

void write_synth(const SynthData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_proposals(data.proposals, dir / "proposals.jsonl");
  save_groundtruth(data.groundtruth, dir / "groundtruth.jsonl");
  save_embeddings(data.embeddings, dir / "embeddings.bin");
}

namespace {

void range_from_json(const nlohmann::json& j, const char* key, ObjectnessRange& r) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2) throw Error(std::string("synth config: '") + key + "' must be [lo, hi]");
  r = {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace

SynthConfig synth_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("synth config: ") + e.what());
  }
  SynthConfig c;
  try {
    c.dim = j.value("dim", c.dim);
    c.n_pos = j.value("n_pos", c.n_pos);
    c.n_neg = j.value("n_neg", c.n_neg);
    c.n_known_as_unknown = j.value("n_known_as_unknown", c.n_known_as_unknown);
    c.n_amb = j.value("n_amb", c.n_amb);
    c.n_known_stream = j.value("n_known_stream", c.n_known_stream);
    c.n_missed_future = j.value("n_missed_future", c.n_missed_future);
    c.images = j.value("images", c.images);
    c.seed = j.value("seed", c.seed);
    if (j.contains("direction_seed") && !j.at("direction_seed").is_null())
      c.direction_seed = j.at("direction_seed").get<std::uint64_t>();
    c.spread = j.value("spread", c.spread);
    c.pos_modes = j.value("pos_modes", c.pos_modes);
    c.neg_modes = j.value("neg_modes", c.neg_modes);
    c.hard_negative_fraction = j.value("hard_negative_fraction", c.hard_negative_fraction);
    c.hard_negative_cos = j.value("hard_negative_cos", c.hard_negative_cos);
    c.shared_direction = j.value("shared_direction", c.shared_direction);
    c.image_prefix = j.value("image_prefix", c.image_prefix);
    c.id_prefix = j.value("id_prefix", c.id_prefix);
    range_from_json(j, "pos_objectness", c.pos_objectness);
    range_from_json(j, "neg_objectness", c.neg_objectness);
    range_from_json(j, "other_objectness", c.other_objectness);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string synth_config_to_json(const SynthConfig& c) {
  nlohmann::ordered_json j;
  j["dim"] = c.dim;
  j["n_pos"] = c.n_pos;
  j["n_neg"] = c.n_neg;
  j["n_known_as_unknown"] = c.n_known_as_unknown;
  j["n_amb"] = c.n_amb;
  j["n_known_stream"] = c.n_known_stream;
  j["n_missed_future"] = c.n_missed_future;
  j["images"] = c.images;
  j["seed"] = c.seed;
  j["direction_seed"] = c.direction_seed ? nlohmann::ordered_json(*c.direction_seed) : nlohmann::ordered_json(nullptr);
  j["spread"] = c.spread;
  j["pos_modes"] = c.pos_modes;
  j["neg_modes"] = c.neg_modes;
  j["hard_negative_fraction"] = c.hard_negative_fraction;
  j["hard_negative_cos"] = c.hard_negative_cos;
  j["shared_direction"] = c.shared_direction;
  j["pos_objectness"] = {c.pos_objectness.lo, c.pos_objectness.hi};
  j["neg_objectness"] = {c.neg_objectness.lo, c.neg_objectness.hi};
  j["other_objectness"] = {c.other_objectness.lo, c.other_objectness.hi};
  j["image_prefix"] = c.image_prefix;
  j["id_prefix"] = c.id_prefix;
  return j.dump(2);
}

}  // namespace dualmem
