#include "dualmem/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "dualmem/filtering.hpp"
#include "dualmem/io.hpp"
#include "dualmem/labeling.hpp"
#include "json.hpp"

namespace dualmem {

namespace {

using oj = nlohmann::ordered_json;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

SplitPaths split_from_json(const nlohmann::json& j, const char* key, const std::filesystem::path& base) {
  if (!j.contains(key)) throw Error(std::string("run config: missing '") + key + "' section");
  const auto& s = j.at(key);
  return {resolve(base, s.at("proposals").get<std::string>()), resolve(base, s.at("groundtruth").get<std::string>()),
          resolve(base, s.at("embeddings").get<std::string>())};
}

oj split_to_json(const SplitPaths& s) {
  return oj{{"proposals", s.proposals.string()},
            {"groundtruth", s.groundtruth.string()},
            {"embeddings", s.embeddings.string()}};
}

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw Error(std::string("stage '") + name + "': " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

oj opt_json(const std::optional<double>& v) { return v ? oj(*v) : oj(nullptr); }

}  // namespace

void RunConfig::validate() const {
  params.validate();
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("run config: alpha must be in (0,1)");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw Error("run config: split_fraction must be in (0,1)");
  if (image_count && *image_count == 0) throw Error("run config: image_count must be positive");
}

RunConfig run_config_from_json(const std::string& text, const std::filesystem::path& base_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("run config: ") + e.what());
  }
  RunConfig c;
  try {
    c.calibration = split_from_json(j, "calibration", base_dir);
    c.evaluation = split_from_json(j, "evaluation", base_dir);
    c.critic = j.value("critic", c.critic);
    c.params.k = j.value("k", c.params.k);
    c.params.temperature = j.value("temperature", c.params.temperature);
    c.alpha = j.value("alpha", c.alpha);
    c.split_fraction = j.value("split_fraction", c.split_fraction);
    c.seed = j.value("seed", c.seed);
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
    if (j.contains("image_count") && !j.at("image_count").is_null())
      c.image_count = j.at("image_count").get<std::size_t>();
    c.sweep_alphas = j.value("sweep_alphas", c.sweep_alphas);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string run_config_to_json(const RunConfig& c) {
  oj j;
  j["calibration"] = split_to_json(c.calibration);
  j["evaluation"] = split_to_json(c.evaluation);
  j["critic"] = c.critic;
  j["k"] = c.params.k;
  j["temperature"] = c.params.temperature;
  j["alpha"] = c.alpha;
  j["split_fraction"] = c.split_fraction;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir.string();
  j["image_count"] = c.image_count ? oj(*c.image_count) : oj(nullptr);
  j["sweep_alphas"] = c.sweep_alphas;
  j["threads"] = c.threads;
  return j.dump(2);
}

void check_image_disjoint(const std::vector<ProposalRecord>& cal_proposals,
                          const std::vector<GroundTruthBox>& cal_groundtruth,
                          const std::vector<ProposalRecord>& eval_proposals,
                          const std::vector<GroundTruthBox>& eval_groundtruth) {
  std::set<std::string> cal;
  for (const auto& p : cal_proposals) cal.insert(p.image_id);
  for (const auto& g : cal_groundtruth) cal.insert(g.image_id);
  std::set<std::string> shared;
  for (const auto& p : eval_proposals)
    if (cal.count(p.image_id)) shared.insert(p.image_id);
  for (const auto& g : eval_groundtruth)
    if (cal.count(g.image_id)) shared.insert(g.image_id);
  if (!shared.empty())
    throw Error("calibration and evaluation splits are not image-disjoint: image '" + *shared.begin() +
                "' appears in both (" + std::to_string(shared.size()) + " shared)");
}

PipelineReport run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  const auto& out = cfg.output_dir;
  std::filesystem::create_directories(out);
  write_text(out / "config.resolved.json", run_config_to_json(cfg));

  struct Split {
    std::vector<ProposalRecord> proposals;
    std::vector<GroundTruthBox> groundtruth;
    EmbeddingMatrix embeddings;
  };
  auto load_split = [](const SplitPaths& paths) {
    Split s;
    s.proposals = load_proposals(paths.proposals);
    s.groundtruth = load_groundtruth(paths.groundtruth);
    s.embeddings = load_embeddings(paths.embeddings);
    validate_embedding_refs(s.proposals, s.embeddings, true);
    return s;
  };
  const Split cal = stage("ingest-calibration", [&] { return load_split(cfg.calibration); });
  const Split eval = stage("ingest-evaluation", [&] { return load_split(cfg.evaluation); });
  stage("check-disjoint", [&] {
    check_image_disjoint(cal.proposals, cal.groundtruth, eval.proposals, eval.groundtruth);
    return 0;
  });

  const auto cal_labeled = stage("decompose", [&] {
    auto labeled = label_unknown_stream(cal.proposals, cal.groundtruth);
    save_labels(labeled, out / "calibration_labels.jsonl");
    write_text(out / "calibration_decomposition.json",
               to_json(decompose(labeled, count_images(cal.proposals, cal.groundtruth))));
    return labeled;
  });

  const DualMemory mem = stage("build-memory", [&] {
    auto m = build_memory(cal_labeled, cal.embeddings, cfg.split_fraction, cfg.seed, "calibration");
    save_memory(m, out / "memory.dmm");
    return m;
  });

  PipelineReport report;
  report.memory_positive = mem.positive.count();
  report.memory_negative = mem.negative.count();
  report.threshold_positive = mem.threshold_positives.count();

  report.calibration = stage("calibrate", [&] {
    auto c = calibrate(mem, cfg.params, cfg.alpha, cfg.threads);
    write_text(out / "calibration.json", to_json(c));
    return c;
  });

  const auto decisions = stage("filter", [&] {
    auto d = filter_stream(eval.proposals, eval.embeddings, mem, cfg.params, report.calibration.tau, cfg.threads);
    attach_labels(d, eval.proposals, eval.groundtruth);
    save_decisions(d, out / "decisions.jsonl");
    return d;
  });

  const std::size_t images = cfg.image_count ? *cfg.image_count : count_images(eval.proposals, eval.groundtruth);
  stage("evaluate", [&] {
    report.raw = evaluate(eval.proposals, eval.groundtruth, nullptr, images);
    report.filtered = evaluate(eval.proposals, eval.groundtruth, &decisions, images);
    return 0;
  });

  if (!cfg.sweep_alphas.empty()) {
    report.sweep = stage("sweep", [&] {
      EvalSet es{eval.proposals, eval.groundtruth, eval.embeddings, images};
      auto pts = alpha_sweep(mem, cfg.params, es, cfg.sweep_alphas, cfg.threads);
      write_text(out / "sweep.csv", sweep_to_csv(pts));
      return pts;
    });
  }

  write_text(out / "report.json", report_to_json(report, cfg));
  return report;
}

std::string report_to_json(const PipelineReport& r, const RunConfig& cfg) {
  auto row = [](const char* method, const MetricsReport& m, bool filtered) {
    oj o;
    o["method"] = method;
    o["fupi"] = m.fupi;
    o["udp"] = opt_json(m.udp);
    o["nmh"] = filtered ? opt_json(m.nmh) : oj(nullptr);
    o["u_recall"] = opt_json(m.u_recall);
    o["sg"] = filtered ? opt_json(m.sg) : oj(nullptr);
    o["retained_counts"] = {{"pos", m.retained.pos},
                            {"neg", m.retained.neg},
                            {"known_as_unknown", m.retained.known_as_unknown},
                            {"amb", m.retained.amb}};
    return o;
  };
  oj j;
  j["critic"] = cfg.critic;
  j["k"] = cfg.params.k;
  j["temperature"] = cfg.params.temperature;
  j["alpha"] = cfg.alpha;
  j["tau"] = r.calibration.tau;
  j["image_count"] = r.raw.image_count;
  j["memory"] = {{"positive", r.memory_positive},
                 {"negative", r.memory_negative},
                 {"threshold_positives", r.threshold_positive}};
  j["rows"] = oj::array({row("raw", r.raw, false), row("dualmem", r.filtered, true)});
  if (r.raw.fupi > 0.0) j["fupi_reduction"] = 1.0 - r.filtered.fupi / r.raw.fupi;
  else j["fupi_reduction"] = nullptr;
  if (r.raw.u_recall && r.filtered.u_recall)
    j["delta_u_recall_pp"] = 100.0 * (*r.filtered.u_recall - *r.raw.u_recall);
  else
    j["delta_u_recall_pp"] = nullptr;
  j["target_nmh"] = cfg.alpha;
  j["realized_nmh"] = opt_json(r.filtered.nmh);
  return j.dump(2);
}

}  // namespace dualmem
