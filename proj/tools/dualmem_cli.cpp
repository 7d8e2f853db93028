// dualmem: command-line front end for the unknown-stream filter.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dualmem/baselines.hpp"
#include "dualmem/calibration.hpp"
#include "dualmem/filtering.hpp"
#include "dualmem/io.hpp"
#include "dualmem/labeling.hpp"
#include "dualmem/memory.hpp"
#include "dualmem/metrics.hpp"
#include "dualmem/parallel.hpp"
#include "dualmem/pipeline.hpp"
#include "dualmem/probe.hpp"
#include "dualmem/synth.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace dualmem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open '" + p.string() + "' for reading");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Writes to `path`, or stdout when empty.
void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

void emit_decisions(const std::vector<FilterDecision>& d, const std::string& path) {
  if (path.empty()) write_decisions(d, std::cout);
  else save_decisions(d, path);
}

std::vector<double> parse_alphas(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw Error("invalid alpha '" + tok + "'");
    }
  }
  if (out.empty()) throw Error("--alphas is empty");
  return out;
}

std::size_t image_count_or(std::size_t override_count, const std::vector<ProposalRecord>& p,
                           const std::vector<GroundTruthBox>& g) {
  return override_count ? override_count : count_images(p, g);
}

struct LrtFlags {
  std::size_t k = LrtParams{}.k;
  double temperature = LrtParams{}.temperature;
  void add(CLI::App* app) {
    app->add_option("--k", k, "neighbor count")->capture_default_str();
    app->add_option("--temperature,-T", temperature, "kernel temperature")->capture_default_str();
  }
  LrtParams params() const { return {k, temperature}; }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dualmem - calibrated dual-memory filter for open-world detector unknown streams"};
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "worker threads (0: $DUALMEM_THREADS or hardware)");

  // ingest-check
  auto* ingest = app.add_subcommand("ingest-check", "validate interchange files");
  std::string in_props, in_gt, in_emb;
  ingest->add_option("--proposals", in_props);
  ingest->add_option("--groundtruth", in_gt);
  ingest->add_option("--embeddings", in_emb);

  // decompose
  auto* decomp = app.add_subcommand("decompose", "label the unknown stream and report its decomposition");
  std::string dc_props, dc_gt, dc_labels_out, dc_out;
  std::size_t dc_images = 0;
  decomp->add_option("--proposals", dc_props)->required();
  decomp->add_option("--groundtruth", dc_gt)->required();
  decomp->add_option("--labels-out", dc_labels_out, "write per-proposal labels (jsonl)");
  decomp->add_option("--image-count", dc_images, "override the number of images");
  decomp->add_option("--out", dc_out);

  // build-memory
  auto* bm = app.add_subcommand("build-memory", "build the dual memory from a calibration split");
  std::string bm_props, bm_gt, bm_emb, bm_out, bm_split_id = "calibration";
  double bm_fraction = 0.5;
  std::uint64_t bm_seed = 0;
  bm->add_option("--proposals", bm_props)->required();
  bm->add_option("--groundtruth", bm_gt)->required();
  bm->add_option("--embeddings", bm_emb)->required();
  bm->add_option("--split-fraction", bm_fraction)->capture_default_str();
  bm->add_option("--seed", bm_seed)->capture_default_str();
  bm->add_option("--split-id", bm_split_id)->capture_default_str();
  bm->add_option("--out", bm_out)->required();

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "choose tau on the held-out threshold positives");
  std::string cal_mem, cal_out;
  double cal_alpha = kDefaultAlpha;
  LrtFlags cal_lrt;
  cal->add_option("--memory", cal_mem)->required();
  cal->add_option("--alpha", cal_alpha)->capture_default_str();
  cal_lrt.add(cal);
  cal->add_option("--out", cal_out);

  // filter
  auto* flt = app.add_subcommand("filter", "score and threshold an unknown stream");
  std::string f_mem, f_props, f_emb, f_gt, f_out;
  double f_tau = 0.0, f_alpha = kDefaultAlpha;
  LrtFlags f_lrt;
  flt->add_option("--memory", f_mem)->required();
  flt->add_option("--proposals", f_props)->required();
  flt->add_option("--embeddings", f_emb)->required();
  flt->add_option("--groundtruth", f_gt, "attach labels to the decisions");
  auto* f_tau_opt = flt->add_option("--tau", f_tau);
  auto* f_alpha_opt = flt->add_option("--alpha", f_alpha, "calibrate tau first");
  f_tau_opt->excludes(f_alpha_opt);
  f_lrt.add(flt);
  flt->add_option("--out", f_out);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "unknown-stream metrics");
  std::string ev_props, ev_gt, ev_dec, ev_out;
  bool ev_raw = false;
  std::size_t ev_images = 0;
  ev->add_option("--proposals", ev_props)->required();
  ev->add_option("--groundtruth", ev_gt)->required();
  ev->add_option("--decisions", ev_dec);
  ev->add_flag("--raw", ev_raw, "score the unfiltered stream");
  ev->add_option("--image-count", ev_images);
  ev->add_option("--out", ev_out);

  // sweep
  auto* sw = app.add_subcommand("sweep", "operating points over alpha");
  std::string sw_mem, sw_props, sw_gt, sw_emb, sw_alphas, sw_out;
  std::size_t sw_images = 0;
  LrtFlags sw_lrt;
  sw->add_option("--memory", sw_mem)->required();
  sw->add_option("--proposals", sw_props)->required();
  sw->add_option("--groundtruth", sw_gt)->required();
  sw->add_option("--embeddings", sw_emb)->required();
  sw->add_option("--alphas", sw_alphas, "comma-separated, increasing")->required();
  sw->add_option("--image-count", sw_images);
  sw_lrt.add(sw);
  sw->add_option("--out", sw_out);

  // probe
  auto* pr = app.add_subcommand("probe", "grouped-CV linear probe separability");
  std::string pr_props, pr_feat, pr_labels, pr_out;
  ProbeConfig pr_cfg;
  pr->add_option("--proposals", pr_props)->required();
  pr->add_option("--features", pr_feat)->required();
  pr->add_option("--labels-from", pr_labels, "labels written by `decompose --labels-out`")->required();
  pr->add_option("--seed", pr_cfg.seed)->capture_default_str();
  pr->add_option("--folds", pr_cfg.n_folds)->capture_default_str();
  pr->add_option("--l2", pr_cfg.logistic.l2)->capture_default_str();
  pr->add_option("--iters", pr_cfg.logistic.iters)->capture_default_str();
  pr->add_option("--step", pr_cfg.logistic.step)->capture_default_str();
  pr->add_option("--out", pr_out);

  // baseline
  auto* bl = app.add_subcommand("baseline", "comparison filters");
  bl->require_subcommand(1);
  auto* bl_obj = bl->add_subcommand("objectness", "objectness threshold");
  std::string bo_props, bo_out;
  double bo_thr = 0.6;
  bl_obj->add_option("--proposals", bo_props)->required();
  bl_obj->add_option("--threshold", bo_thr)->capture_default_str();
  bl_obj->add_option("--out", bo_out);
  auto* bl_km = bl->add_subcommand("kmeans", "k-means prototype dual-threshold rule");
  std::string bk_mem, bk_props, bk_emb, bk_out;
  PrototypeConfig bk_cfg;
  bl_km->add_option("--memory", bk_mem)->required();
  bl_km->add_option("--proposals", bk_props)->required();
  bl_km->add_option("--embeddings", bk_emb)->required();
  bl_km->add_option("--k-pos", bk_cfg.k_pos)->capture_default_str();
  bl_km->add_option("--k-neg", bk_cfg.k_neg)->capture_default_str();
  bl_km->add_option("--tau", bk_cfg.tau_cos)->capture_default_str();
  bl_km->add_option("--seed", bk_cfg.seed)->capture_default_str();
  bl_km->add_option("--max-iters", bk_cfg.max_iters)->capture_default_str();
  bl_km->add_option("--out", bk_out);

  // fuse
  auto* fu = app.add_subcommand("fuse", "combine two critics' embedding matrices");
  std::string fu_a, fu_b, fu_mode = "concat", fu_out;
  fu->add_option("--a", fu_a)->required();
  fu->add_option("--b", fu_b)->required();
  fu->add_option("--mode", fu_mode)->check(CLI::IsMember({"concat", "average"}))->capture_default_str();
  fu->add_option("--out", fu_out)->required();

  // synth
  auto* sy = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string sy_cfg, sy_out;
  sy->add_option("--config", sy_cfg, "JSON generator config (defaults when omitted)");
  sy->add_option("--out-dir", sy_out)->required();

  // run
  auto* run = app.add_subcommand("run", "full pipeline from a run config");
  std::string run_cfg, run_out_dir;
  run->add_option("--config", run_cfg)->required();
  run->add_option("--out-dir", run_out_dir, "override output_dir");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      nlohmann::ordered_json o;
      std::vector<ProposalRecord> props;
      if (!in_props.empty()) {
        props = load_proposals(in_props);
        std::size_t unknown = 0;
        for (const auto& p : props) unknown += p.stream == Stream::unknown;
        o["proposals"] = {{"records", props.size()}, {"unknown_stream", unknown}};
      }
      if (!in_gt.empty()) o["groundtruth"] = {{"records", load_groundtruth(in_gt).size()}};
      if (!in_emb.empty()) {
        auto m = load_embeddings(in_emb);
        o["embeddings"] = {{"dim", m.dim()}, {"count", m.count()}};
        if (!props.empty()) validate_embedding_refs(props, m, true);
      }
      o["ok"] = true;
      std::cout << o.dump(2) << '\n';
    } else if (*decomp) {
      auto props = load_proposals(dc_props);
      auto gt = load_groundtruth(dc_gt);
      auto labeled = label_unknown_stream(props, gt);
      if (!dc_labels_out.empty()) save_labels(labeled, dc_labels_out);
      emit(to_json(decompose(labeled, image_count_or(dc_images, props, gt))), dc_out);
    } else if (*bm) {
      auto props = load_proposals(bm_props);
      auto gt = load_groundtruth(bm_gt);
      auto emb = load_embeddings(bm_emb);
      auto mem = build_memory(label_unknown_stream(props, gt), emb, bm_fraction, bm_seed, bm_split_id);
      save_memory(mem, bm_out);
      nlohmann::ordered_json o;
      o["positive"] = mem.positive.count();
      o["negative"] = mem.negative.count();
      o["threshold_positives"] = mem.threshold_positives.count();
      o["dim"] = mem.dim();
      std::cout << o.dump(2) << '\n';
    } else if (*cal) {
      auto mem = load_memory(cal_mem);
      emit(to_json(calibrate(mem, cal_lrt.params(), cal_alpha, threads)), cal_out);
    } else if (*flt) {
      auto mem = load_memory(f_mem);
      auto props = load_proposals(f_props);
      auto emb = load_embeddings(f_emb);
      double tau = f_tau;
      if (f_tau_opt->count() == 0) {
        auto c = calibrate(mem, f_lrt.params(), f_alpha, threads);
        tau = c.tau;
        std::cerr << "calibrated tau=" << tau << " at alpha=" << f_alpha << '\n';
      }
      auto decisions = filter_stream(props, emb, mem, f_lrt.params(), tau, threads);
      if (!f_gt.empty()) attach_labels(decisions, props, load_groundtruth(f_gt));
      emit_decisions(decisions, f_out);
    } else if (*ev) {
      auto props = load_proposals(ev_props);
      auto gt = load_groundtruth(ev_gt);
      const std::size_t images = image_count_or(ev_images, props, gt);
      if (ev_raw || ev_dec.empty()) {
        emit(to_json(evaluate(props, gt, nullptr, images)), ev_out);
      } else {
        auto dec = load_decisions(ev_dec);
        emit(to_json(evaluate(props, gt, &dec, images)), ev_out);
      }
    } else if (*sw) {
      auto mem = load_memory(sw_mem);
      EvalSet es{load_proposals(sw_props), load_groundtruth(sw_gt), load_embeddings(sw_emb), sw_images};
      auto alphas = parse_alphas(sw_alphas);
      emit(sweep_to_csv(alpha_sweep(mem, sw_lrt.params(), es, alphas, threads)), sw_out);
    } else if (*pr) {
      auto props = load_proposals(pr_props);
      auto emb = load_embeddings(pr_feat);
      auto labeled = load_labels(pr_labels, props);
      pr_cfg.threads = threads;
      auto res = run_probe(labeled, emb, pr_cfg);
      for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
      emit(to_json(res), pr_out);
    } else if (*bl_obj) {
      emit_decisions(objectness_filter(load_proposals(bo_props), bo_thr), bo_out);
    } else if (*bl_km) {
      auto mem = load_memory(bk_mem);
      auto proto = build_prototypes(mem, bk_cfg);
      emit_decisions(prototype_filter(load_proposals(bk_props), load_embeddings(bk_emb), proto, threads), bk_out);
    } else if (*fu) {
      save_embeddings(fuse_embeddings(load_embeddings(fu_a), load_embeddings(fu_b), fusion_mode_from_string(fu_mode)),
                      fu_out);
    } else if (*sy) {
      SynthConfig c = sy_cfg.empty() ? SynthConfig{} : synth_config_from_json(read_file(sy_cfg));
      auto data = generate(c);
      write_synth(data, sy_out);
      emit(synth_config_to_json(c), (fs::path(sy_out) / "synth_config.json").string());
    } else if (*run) {
      auto c = run_config_from_json(read_file(run_cfg), fs::path(run_cfg).parent_path());
      if (!run_out_dir.empty()) c.output_dir = run_out_dir;
      if (threads) c.threads = threads;
      auto report = run_pipeline(c);
      std::cout << report_to_json(report, c) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
