#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "satstereo/dense.hpp"
#include "satstereo/dsm_eval.hpp"
#include "satstereo/errors.hpp"
#include "satstereo/harness.hpp"
#include "satstereo/lsm.hpp"
#include "satstereo/rpc_io.hpp"
#include "satstereo/synthetic.hpp"

namespace fs = std::filesystem;
using namespace satstereo;

namespace {

PairEntry find_pair(const fs::path& pairs_file, const std::string& id) {
  for (auto& p : load_pairs_manifest(pairs_file)) {
    if (p.pair_id == id) return p;
  }
  throw ValidationError("pair '" + id + "' not found in " + pairs_file.string());
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return nlohmann::json::parse(in);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Satellite stereo matching evaluation: pair selection, orientation, DSM scoring"};
  app.require_subcommand(1);

  // pairs
  auto* pairs_cmd = app.add_subcommand("pairs", "Select stereo pairs from a tile manifest");
  fs::path tile_manifest, pairs_out;
  SelectionConfig sel;
  pairs_cmd->add_option("--manifest", tile_manifest, "Tile manifest JSON")->required();
  pairs_cmd->add_option("--out", pairs_out, "Pairs manifest to write")->required();
  pairs_cmd->add_option("--k", sel.k, "Pairs per tile")->capture_default_str();
  pairs_cmd->add_option("--angle-min", sel.angle_min, "Degrees")->capture_default_str();
  pairs_cmd->add_option("--angle-max", sel.angle_max, "Degrees")->capture_default_str();
  pairs_cmd->add_option("--seed", sel.seed, "Run seed")->capture_default_str();

  // match
  auto* match_cmd = app.add_subcommand("match", "Match one pair or import external matches");
  fs::path pairs_file, match_out, import_csv;
  std::string pair_id, method = "baseline";
  MatchOptions mopts;
  bool no_crosscheck = false;
  match_cmd->add_option("--pairs", pairs_file, "Pairs manifest")->required();
  match_cmd->add_option("--pair", pair_id, "Pair id")->required();
  auto* method_opt = match_cmd->add_option("--method", method, "Method name")->capture_default_str();
  match_cmd->add_option("--import", import_csv, "External match CSV (x1,y1,x2,y2[,score])")
      ->excludes(method_opt);
  match_cmd->add_option("--out", match_out, "Output CSV")->required();
  match_cmd->add_option("--ratio", mopts.ratio, "Ratio test threshold")->capture_default_str();
  match_cmd->add_flag("--no-crosscheck", no_crosscheck, "Disable the mutual check");

  // orient
  auto* orient_cmd = app.add_subcommand("orient", "Bias-compensated relative orientation");
  fs::path matches_in, orient_out;
  OrientationConfig ocfg;
  bool orient_lsm = false;
  orient_cmd->add_option("--pairs", pairs_file, "Pairs manifest")->required();
  orient_cmd->add_option("--pair", pair_id, "Pair id")->required();
  orient_cmd->add_option("--matches", matches_in, "Match CSV")->required();
  orient_cmd->add_option("--out", orient_out, "orientation.json")->required();
  orient_cmd->add_flag("--lsm", orient_lsm, "Refine matches with LSM");
  bool lsm_after = false;
  orient_cmd->add_flag("--lsm-after", lsm_after, "With --lsm: refine after RANSAC instead of before");
  orient_cmd->add_option("--threshold", ocfg.ransac_threshold, "Consensus threshold, px")
      ->capture_default_str();
  orient_cmd->add_option("--gate", ocfg.max_epipolar_rms, "Success gate T, px")
      ->capture_default_str();
  orient_cmd->add_option("--iterations", ocfg.ransac_iterations)->capture_default_str();
  orient_cmd->add_option("--seed", ocfg.seed)->capture_default_str();

  // densify
  auto* dense_cmd = app.add_subcommand("densify", "Rectify, run SGM and grid a DSM");
  fs::path orient_in, dsm_out;
  double cell_size = 0.5;
  SgmConfig scfg;
  dense_cmd->add_option("--pairs", pairs_file, "Pairs manifest")->required();
  dense_cmd->add_option("--pair", pair_id, "Pair id")->required();
  dense_cmd->add_option("--orientation", orient_in, "orientation.json")->required();
  dense_cmd->add_option("--out", dsm_out, "DSM .asc")->required();
  dense_cmd->add_option("--cell-size", cell_size, "Meters")->capture_default_str();
  dense_cmd->add_option("--p1", scfg.p1)->capture_default_str();
  dense_cmd->add_option("--p2", scfg.p2)->capture_default_str();
  dense_cmd->add_option("--workers", scfg.workers)->capture_default_str();

  // dsm-eval
  auto* eval_cmd = app.add_subcommand("dsm-eval", "Co-register and score a DSM");
  fs::path generated, truth, eval_out;
  eval_cmd->add_option("--generated", generated)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--truth", truth)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", eval_out)->required();
  std::string eval_pair, eval_method;
  eval_cmd->add_option("--pair", eval_pair, "Pair id recorded in the report");
  eval_cmd->add_option("--method", eval_method, "Method recorded in the report");

  // run
  auto* run_cmd = app.add_subcommand("run", "Run the full workflow from a config file");
  fs::path config_path;
  int workers = 0;
  bool force = false;
  std::string run_id;
  fs::path output_dir;
  run_cmd->add_option("--config", config_path, "Run config JSON")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--workers", workers, "Parallel tasks (default: SATSTEREO_WORKERS or config)");
  run_cmd->add_flag("--force", force, "Recompute tasks that already have a report");
  run_cmd->add_option("--run-id", run_id);
  run_cmd->add_option("--output-dir", output_dir);

  // report
  auto* report_cmd = app.add_subcommand("report", "Aggregate a run directory into CSV tables");
  fs::path run_dir, report_out;
  report_cmd->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  report_cmd->add_option("--out", report_out, "Table directory (default: <run>/tables)");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic demo tile");
  fs::path synth_out;
  synth::DatasetSpec dspec;
  synth_cmd->add_option("--out", synth_out)->required();
  synth_cmd->add_option("--seed", dspec.seed)->capture_default_str();
  synth_cmd->add_option("--size", dspec.size, "Image size in pixels")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pairs_cmd) {
      std::vector<std::string> warnings;
      const auto pairs = select_pairs(load_tile_manifest(tile_manifest), sel, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
      save_pairs_manifest(pairs, sel, pairs_out);
      std::cout << pairs.size() << " pairs written to " << pairs_out.string() << "\n";
    } else if (*match_cmd) {
      const PairEntry pair = find_pair(pairs_file, pair_id);
      mopts.crosscheck = !no_crosscheck;
      MatchSet set;
      if (!import_csv.empty()) {
        const GrayImage a = read_image(pair.image_a.image_path);
        const GrayImage b = read_image(pair.image_b.image_path);
        auto loaded = load_matches(import_csv, pair.pair_id, import_csv.stem().string(),
                                   {a.width(), a.height()}, {b.width(), b.height()});
        for (const auto& r : loaded.rejected) {
          std::cerr << "rejected line " << r.line << ": " << r.reason << "\n";
        }
        std::cerr << loaded.rejected.size() << " rejected, " << loaded.duplicates
                  << " duplicates\n";
        set = std::move(loaded.set);
      } else {
        set = match_pair(pair, method, mopts);
      }
      write_matches(set, match_out);
      std::cout << set.size() << " matches written to " << match_out.string() << "\n";
    } else if (*orient_cmd) {
      const PairEntry pair = find_pair(pairs_file, pair_id);
      const GrayImage a = read_image(pair.image_a.image_path);
      const GrayImage b = read_image(pair.image_b.image_path);
      MatchSet set = load_matches(matches_in, pair.pair_id, matches_in.stem().string(),
                                  {a.width(), a.height()}, {b.width(), b.height()})
                         .set;
      const RpcModel m1 = load_rpc(pair.image_a.rpc_path);
      const RpcModel m2 = load_rpc(pair.image_b.rpc_path);
      const Orientation o =
          orient_lsm ? orient_with_lsm(m1, m2, a, b, set, ocfg,
                                       lsm_after ? LsmOrder::After : LsmOrder::Before)
                     : ransac_bias(m1, m2, set, ocfg);
      write_json(orientation_to_json(o, ocfg), orient_out);
      std::cout << (o.success ? "success" : "failure") << ": " << o.inliers << "/" << set.size()
                << " inliers, epipolar rms " << o.epipolar_rms << " px\n";
      return o.success ? 0 : 2;
    } else if (*dense_cmd) {
      const PairEntry pair = find_pair(pairs_file, pair_id);
      if (!pair.roi) throw ValidationError("pair has no ROI; add `roi` to the tile manifest");
      const Orientation o = orientation_from_json(read_json(orient_in));
      if (!o.success) throw ValidationError("orientation did not pass the gate");
      const RpcModel m1 = load_rpc(pair.image_a.rpc_path);
      const RpcModel m2 = load_rpc(pair.image_b.rpc_path);
      const RectifiedPair rect = rectify(read_image(pair.image_a.image_path),
                                         read_image(pair.image_b.image_path), m1, m2, o.bias,
                                         *pair.roi);
      const DisparityMap disp = sgm(rect, scfg);
      DsmBuildStats stats;
      const DsmGrid dsm = dsm_from_disparity(disp, rect.map, m1, m2, o.bias,
                                             grid_for_roi(*pair.roi, cell_size), &stats);
      if (dsm_out.has_parent_path()) fs::create_directories(dsm_out.parent_path());
      write_ascii_grid(dsm, dsm_out);
      write_sidecar(dsm_out, {{"pair_id", pair.pair_id},
                              {"config_hash", config_hash({{"p1", scfg.p1},
                                                           {"p2", scfg.p2},
                                                           {"cell_size", cell_size}})}});
      std::cout << stats.triangulated << " points, " << stats.failed << " failed, "
                << dsm.valid_count() << " cells\n";
    } else if (*eval_cmd) {
      const DsmScores s = evaluate_dsm(read_ascii_grid(generated), read_ascii_grid(truth));
      EvalReport r;
      r.pair_id = eval_pair;
      r.method = eval_method;
      r.success = true;
      r.dsm = true;
      r.completeness = s.completeness;
      r.rmse = s.rmse;
      r.shift = s.registration.shift;
      nlohmann::json j = report_to_json(r);
      j["coregistered"] = s.registered;
      j["horizontal_degenerate"] = s.registration.horizontal_degenerate;
      write_json(j, eval_out);
      std::cout << "completeness " << s.completeness << " %, rmse " << s.rmse << " m\n";
    } else if (*run_cmd) {
      RunConfig cfg = run_config_from_json(read_json(config_path), config_path.parent_path());
      if (workers > 0) cfg.workers = workers;
      if (force) cfg.force = true;
      if (!run_id.empty()) cfg.run_id = run_id;
      if (!output_dir.empty()) cfg.output_dir = output_dir;
      const RunResult res = run_pipeline(cfg, [](const EvalReport& r, bool reused) {
        std::cerr << (reused ? "[cached] " : "") << r.pair_id << " " << r.method << ": "
                  << (r.success ? "ok" : "failed") << (r.failure.empty() ? "" : " (" + r.failure + ")")
                  << "\n";
      });
      std::cout << res.reports.size() << " tasks (" << res.skipped << " reused), stats in "
                << res.run_dir.string() << "\n";
    } else if (*report_cmd) {
      const auto reports = collect_reports(run_dir);
      if (reports.empty()) throw ValidationError("no report.json found under " + run_dir.string());
      const AggregateStats stats = aggregate(reports);
      write_stats(stats, run_dir);
      const fs::path out = report_out.empty() ? run_dir / "tables" : report_out;
      for (const auto& p : write_report_tables(reports, stats, out)) std::cout << p.string() << "\n";
    } else if (*synth_cmd) {
      std::cout << synth::write_dataset(synth_out, dspec).string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
