#include "satstereo/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "satstereo/errors.hpp"
#include "satstereo/random.hpp"
#include "satstereo/rpc_io.hpp"

namespace satstereo {

namespace fs = std::filesystem;

namespace {

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

bool is_lsm_method(const std::string& m) {
  const std::string suffix = kLsmSuffix;
  return m.size() > suffix.size() && m.compare(m.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string plain_method(const std::string& m) {
  return is_lsm_method(m) ? m.substr(0, m.size() - std::string(kLsmSuffix).size()) : m;
}

std::vector<PairEntry> load_pairs(const RunConfig& cfg) {
  const nlohmann::json j = read_json(cfg.manifest);
  if (j.contains("pairs")) return pairs_from_json(j);
  SelectionConfig sel = cfg.selection;
  sel.seed = cfg.seed;
  return select_pairs(load_tile_manifest(cfg.manifest), sel);
}

}  // namespace

LsmOrder parse_lsm_order(const std::string& s) {
  if (s == "before") return LsmOrder::Before;
  if (s == "after") return LsmOrder::After;
  throw ValidationError("lsm order must be 'before' or 'after', got '" + s + "'");
}

const char* to_string(LsmOrder order) { return order == LsmOrder::Before ? "before" : "after"; }

Orientation orient_with_lsm(const RpcModel& m1, const RpcModel& m2, const GrayImage& img1,
                            const GrayImage& img2, MatchSet& matches,
                            const OrientationConfig& cfg, LsmOrder order, const LsmConfig& lsm) {
  if (order == LsmOrder::Before) {
    matches = refine_matchset(img1, img2, matches, lsm).matches;
    return ransac_bias(m1, m2, matches, cfg);
  }
  const Orientation raw = ransac_bias(m1, m2, matches, cfg);
  matches = refine_matchset(img1, img2, matches, lsm).matches;
  std::vector<std::size_t> consensus;
  for (std::size_t i = 0; i < raw.inlier_mask.size(); ++i) {
    if (raw.inlier_mask[i]) consensus.push_back(i);
  }
  if (consensus.size() < 3) return evaluate_bias(m1, m2, raw.bias, matches, cfg);
  const auto prepared = prepare_matches(m1, m2, matches, cfg.epipolar_samples);
  const BiasCorrection refit = fit_bias(prepared, consensus, raw.bias, matches.size_b);
  Orientation out = evaluate_bias(m1, m2, refit.plausible() ? refit : raw.bias, matches, cfg);
  out.pair_id = raw.pair_id;
  return out;
}

RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base) {
  RunConfig c;
  auto path_of = [&](const std::string& s) {
    fs::path p(s);
    return p.is_absolute() || base.empty() ? p : base / p;
  };
  try {
    c.manifest = path_of(j.at("manifest").get<std::string>());
    if (j.contains("methods")) c.methods = j.at("methods").get<std::vector<std::string>>();
    c.seed = j.value("seed", c.seed);
    c.run_id = j.value("run_id", c.run_id);
    if (j.contains("output_dir")) c.output_dir = path_of(j.at("output_dir").get<std::string>());
    c.workers = j.value("workers", default_workers(c.workers));
    c.lsm = j.value("lsm", c.lsm);
    if (j.contains("lsm_order")) c.lsm_order = parse_lsm_order(j.at("lsm_order").get<std::string>());
    c.dense = j.value("dense", c.dense);
    c.cell_size = j.value("cell_size", c.cell_size);
    if (j.contains("selection")) {
      const auto& s = j.at("selection");
      c.selection.angle_min = s.value("angle_min", c.selection.angle_min);
      c.selection.angle_max = s.value("angle_max", c.selection.angle_max);
      c.selection.k = s.value("k", c.selection.k);
    }
    if (j.contains("orientation")) {
      const auto& o = j.at("orientation");
      c.orientation.max_epipolar_rms = o.value("max_epipolar_rms", c.orientation.max_epipolar_rms);
      c.orientation.ransac_threshold = o.value("ransac_threshold", c.orientation.ransac_threshold);
      c.orientation.ransac_iterations = o.value("ransac_iterations", c.orientation.ransac_iterations);
      c.orientation.min_inliers = o.value("min_inliers", c.orientation.min_inliers);
      c.orientation.epipolar_samples = o.value("epipolar_samples", c.orientation.epipolar_samples);
    }
    if (j.contains("matching")) {
      const auto& m = j.at("matching");
      c.matching.ratio = m.value("ratio", c.matching.ratio);
      c.matching.crosscheck = m.value("crosscheck", c.matching.crosscheck);
    }
    if (j.contains("lsm_window")) c.lsm_config.window = j.at("lsm_window").get<int>();
    if (j.contains("sgm")) {
      const auto& s = j.at("sgm");
      c.sgm.p1 = s.value("p1", c.sgm.p1);
      c.sgm.p2 = s.value("p2", c.sgm.p2);
      c.sgm.lr_tolerance = s.value("lr_tolerance", c.sgm.lr_tolerance);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("run config: ") + e.what());
  }
  validate(c);
  return c;
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  return {{"manifest", c.manifest.string()},
          {"methods", c.methods},
          {"seed", c.seed},
          {"lsm", c.lsm},
          {"lsm_order", to_string(c.lsm_order)},
          {"dense", c.dense},
          {"cell_size", c.cell_size},
          {"selection",
           {{"angle_min", c.selection.angle_min},
            {"angle_max", c.selection.angle_max},
            {"k", c.selection.k}}},
          {"orientation",
           {{"max_epipolar_rms", c.orientation.max_epipolar_rms},
            {"ransac_threshold", c.orientation.ransac_threshold},
            {"ransac_iterations", c.orientation.ransac_iterations},
            {"min_inliers", c.orientation.min_inliers},
            {"epipolar_samples", c.orientation.epipolar_samples}}},
          {"matching", {{"ratio", c.matching.ratio}, {"crosscheck", c.matching.crosscheck}}},
          {"lsm_window", c.lsm_config.window},
          {"sgm", {{"p1", c.sgm.p1}, {"p2", c.sgm.p2}, {"lr_tolerance", c.sgm.lr_tolerance}}}};
}

void validate(const RunConfig& c) {
  if (c.methods.empty()) throw ValidationError("at least one method is required");
  for (const auto& m : c.methods) {
    if (m.empty() || m.find_first_of("/\\") != std::string::npos) {
      throw ValidationError("invalid method name '" + m + "'");
    }
  }
  if (c.workers < 1) throw ValidationError("worker count must be at least 1");
  if (!(c.cell_size > 0.0)) throw ValidationError("cell_size must be positive");
  if (c.run_id.empty()) throw ValidationError("run_id must not be empty");
  validate(c.orientation);
}

int default_workers(int fallback) {
  const char* env = std::getenv("SATSTEREO_WORKERS");
  if (!env || !*env) return fallback;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 1024) {
    throw ValidationError(std::string("SATSTEREO_WORKERS must be a positive integer, got '") +
                          env + "'");
  }
  return static_cast<int>(v);
}

std::optional<fs::path> match_file_for(const PairEntry& pair, const std::string& method) {
  for (const auto& [name, pattern] : pair.match_files) {
    if (name != method) continue;
    std::string s = pattern;
    const std::string key = "{pair}";
    for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos)) {
      s.replace(pos, key.size(), pair.pair_id);
      pos += pair.pair_id.size();
    }
    return fs::path(s);
  }
  return std::nullopt;
}

MatchSet match_pair(const PairEntry& pair, const std::string& method, const MatchOptions& opts) {
  const GrayImage a = read_image(pair.image_a.image_path);
  const GrayImage b = read_image(pair.image_b.image_path);
  if (method == "baseline") return baseline_match(a, b, opts, pair.pair_id);
  const auto file = match_file_for(pair, method);
  if (!file) throw ValidationError("no match file configured for method '" + method + "'");
  MatchLoadReport loaded = load_matches(*file, pair.pair_id, method, {a.width(), a.height()},
                                        {b.width(), b.height()});
  return std::move(loaded.set);
}

TaskPaths task_paths(const fs::path& run_dir, const std::string& pair_id,
                     const std::string& method) {
  TaskPaths p;
  p.dir = run_dir / pair_id / method;
  p.matches = p.dir / "matches.csv";
  p.orientation = p.dir / "orientation.json";
  p.dsm = p.dir / "dsm.asc";
  p.report = p.dir / "report.json";
  return p;
}

EvalReport run_task(const PairEntry& pair, const std::string& method, bool use_lsm,
                    const RunConfig& cfg, const fs::path& run_dir) {
  EvalReport r;
  r.pair_id = pair.pair_id;
  r.method = use_lsm ? method + kLsmSuffix : method;
  const TaskPaths paths = task_paths(run_dir, r.pair_id, r.method);
  try {
    fs::create_directories(paths.dir);
    const RpcModel m1 = load_rpc(pair.image_a.rpc_path);
    const RpcModel m2 = load_rpc(pair.image_b.rpc_path);
    MatchSet matches = match_pair(pair, method, cfg.matching);
    matches.method = r.method;
    const bool need_images = use_lsm || (cfg.dense && pair.roi);
    GrayImage img1, img2;
    if (need_images) {
      img1 = read_image(pair.image_a.image_path);
      img2 = read_image(pair.image_b.image_path);
    }
    r.matches = matches.size();

    OrientationConfig ocfg = cfg.orientation;
    ocfg.seed = derive_seed(cfg.seed, "ransac/" + pair.pair_id + "/" + method);
    Orientation o;
    if (matches.size() < 3) {
      o.pair_id = pair.pair_id;
      o.epipolar_rms = std::numeric_limits<double>::quiet_NaN();
      o.success = false;
    } else if (use_lsm) {
      o = orient_with_lsm(m1, m2, img1, img2, matches, ocfg, cfg.lsm_order, cfg.lsm_config);
    } else {
      o = ransac_bias(m1, m2, matches, ocfg);
    }
    write_matches(matches, paths.matches);
    write_text(paths.orientation, orientation_to_json(o, ocfg).dump(2) + "\n");
    r.inliers = o.inliers;
    r.inlier_ratio = o.inlier_ratio;
    r.epipolar_rms = o.epipolar_rms;
    r.success = o.success;
    if (!o.success) {
      r.failure = "relative orientation failed the gate";
    } else if (cfg.dense && pair.roi) {
      SgmConfig scfg = cfg.sgm;
      scfg.workers = 1;
      const RectifiedPair rect = rectify(img1, img2, m1, m2, o.bias, *pair.roi);
      const DisparityMap disp = sgm(rect, scfg);
      const MapGrid grid = grid_for_roi(*pair.roi, cfg.cell_size);
      const DsmGrid dsm = dsm_from_disparity(disp, rect.map, m1, m2, o.bias, grid);
      write_ascii_grid(dsm, paths.dsm);
      write_sidecar(paths.dsm, {{"pair_id", r.pair_id},
                                {"method", r.method},
                                {"config_hash", config_hash(run_config_to_json(cfg))}});
      if (pair.truth_dsm) {
        const DsmScores s = evaluate_dsm(dsm, read_ascii_grid(*pair.truth_dsm));
        r.dsm = true;
        r.completeness = s.completeness;
        r.rmse = s.rmse;
        r.shift = s.registration.shift;
      }
    }
  } catch (const std::exception& e) {
    r.success = false;
    r.failure = e.what();
  }
  try {
    fs::create_directories(paths.dir);
    write_text(paths.report, report_to_json(r).dump(2) + "\n");
  } catch (const std::exception&) {
    // the in-memory report is still returned
  }
  return r;
}

std::optional<FiveNumber> five_number(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }),
          v.end());
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  auto median = [](const double* b, std::size_t n) {
    return n % 2 ? b[n / 2] : 0.5 * (b[n / 2 - 1] + b[n / 2]);
  };
  const std::size_t n = v.size();
  FiveNumber f;
  f.n = n;
  f.min = v.front();
  f.max = v.back();
  f.median = median(v.data(), n);
  if (n == 1) {
    f.q1 = f.q3 = v[0];
  } else {
    const std::size_t half = n / 2;
    f.q1 = median(v.data(), half);
    f.q3 = median(v.data() + (n - half), half);
  }
  return f;
}

double metric_value(const EvalReport& r, const std::string& metric) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  if (metric == "inlier_ratio") return r.inlier_ratio;
  if (metric == "epipolar_rms") return r.epipolar_rms;
  if (metric == "completeness") return r.dsm ? r.completeness : nan;
  if (metric == "rmse") return r.dsm ? r.rmse : nan;
  throw ValidationError("unknown metric '" + metric + "'");
}

AggregateStats aggregate(const std::vector<EvalReport>& reports) {
  AggregateStats out;
  std::map<std::string, std::vector<const EvalReport*>> by_method;
  for (const auto& r : reports) by_method[r.method].push_back(&r);

  for (const auto& [method, list] : by_method) {
    MethodStats ms;
    ms.method = method;
    ms.total = list.size();
    for (const auto* r : list) ms.successes += r->success ? 1 : 0;
    ms.success_rate = 100.0 * static_cast<double>(ms.successes) / static_cast<double>(ms.total);
    for (const auto& metric : metric_names()) {
      std::vector<double> values;
      for (const auto* r : list) {
        if (r->success) values.push_back(metric_value(*r, metric));
      }
      ms.summaries[metric] = five_number(std::move(values));
    }
    out.methods.push_back(std::move(ms));
  }

  for (const auto& [method, list] : by_method) {
    if (!is_lsm_method(method)) continue;
    const auto plain_it = by_method.find(plain_method(method));
    if (plain_it == by_method.end()) continue;
    std::map<std::string, const EvalReport*> plain;
    for (const auto* r : plain_it->second) plain[r->pair_id] = r;
    LsmChange lc;
    lc.method = plain_method(method);
    std::map<std::string, std::pair<double, double>> sums;  // metric -> (plain, lsm)
    std::map<std::string, std::size_t> counts;
    for (const auto* r : list) {
      const auto p = plain.find(r->pair_id);
      if (p == plain.end() || !r->success || !p->second->success) continue;
      ++lc.pairs;
      for (const auto& metric : metric_names()) {
        const double a = metric_value(*p->second, metric);
        const double b = metric_value(*r, metric);
        if (!std::isfinite(a) || !std::isfinite(b)) continue;
        sums[metric].first += a;
        sums[metric].second += b;
        ++counts[metric];
      }
    }
    for (const auto& metric : metric_names()) {
      std::optional<double> change;
      const auto c = counts.find(metric);
      if (c != counts.end() && c->second > 0) {
        const double n = static_cast<double>(c->second);
        const double plain_mean = sums[metric].first / n;
        const double lsm_mean = sums[metric].second / n;
        if (plain_mean != 0.0) change = relative_change(lsm_mean, plain_mean);
      }
      lc.change[metric] = change;
    }
    out.lsm.push_back(std::move(lc));
  }
  return out;
}

nlohmann::json stats_to_json(const AggregateStats& s) {
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : s.methods) {
    nlohmann::json summaries = nlohmann::json::object();
    for (const auto& [metric, f] : m.summaries) {
      if (!f) {
        summaries[metric] = nullptr;
        continue;
      }
      summaries[metric] = {{"n", f->n},           {"min", num(f->min)}, {"q1", num(f->q1)},
                           {"median", num(f->median)}, {"q3", num(f->q3)}, {"max", num(f->max)}};
    }
    methods.push_back({{"method", m.method},
                       {"total", m.total},
                       {"successes", m.successes},
                       {"success_rate", m.success_rate},
                       {"summaries", summaries}});
  }
  nlohmann::json lsm = nlohmann::json::array();
  for (const auto& l : s.lsm) {
    nlohmann::json change = nlohmann::json::object();
    for (const auto& [metric, v] : l.change) change[metric] = v ? num(*v) : nlohmann::json();
    lsm.push_back({{"method", l.method}, {"pairs", l.pairs}, {"relative_change", change}});
  }
  return {{"methods", methods}, {"lsm_relative_change", lsm}};
}

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string stats_to_csv(const AggregateStats& s) {
  std::ostringstream os;
  os << "method,metric,statistic,value\n";
  for (const auto& m : s.methods) {
    os << m.method << ",success_rate,value," << fmt(m.success_rate) << "\n";
    for (const auto& [metric, f] : m.summaries) {
      if (!f) continue;
      os << m.method << "," << metric << ",n," << f->n << "\n";
      os << m.method << "," << metric << ",min," << fmt(f->min) << "\n";
      os << m.method << "," << metric << ",q1," << fmt(f->q1) << "\n";
      os << m.method << "," << metric << ",median," << fmt(f->median) << "\n";
      os << m.method << "," << metric << ",q3," << fmt(f->q3) << "\n";
      os << m.method << "," << metric << ",max," << fmt(f->max) << "\n";
    }
  }
  for (const auto& l : s.lsm) {
    for (const auto& [metric, v] : l.change) {
      if (v) os << l.method << "," << metric << ",lsm_relative_change," << fmt(*v) << "\n";
    }
  }
  return os.str();
}

std::vector<EvalReport> collect_reports(const fs::path& run_dir) {
  std::vector<EvalReport> out;
  if (!fs::exists(run_dir)) return out;
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "report.json") {
      out.push_back(report_from_json(read_json(entry.path())));
    }
  }
  std::sort(out.begin(), out.end(), [](const EvalReport& a, const EvalReport& b) {
    return std::tie(a.pair_id, a.method) < std::tie(b.pair_id, b.method);
  });
  return out;
}

void write_stats(const AggregateStats& stats, const fs::path& run_dir) {
  fs::create_directories(run_dir);
  write_text(run_dir / "stats.json", stats_to_json(stats).dump(2) + "\n");
  write_text(run_dir / "stats.csv", stats_to_csv(stats));
}

RunResult run_pipeline(const RunConfig& cfg, const ProgressFn& progress) {
  validate(cfg);
  const std::vector<PairEntry> pairs = load_pairs(cfg);
  RunResult result;
  result.run_dir = cfg.output_dir / cfg.run_id;
  fs::create_directories(result.run_dir);
  save_pairs_manifest(pairs, cfg.selection, result.run_dir / "pairs.json");
  write_text(result.run_dir / "config.json", run_config_to_json(cfg).dump(2) + "\n");

  struct Task {
    const PairEntry* pair;
    std::string method;
    bool lsm;
  };
  std::vector<Task> tasks;
  for (const auto& p : pairs) {
    for (const auto& m : cfg.methods) {
      tasks.push_back({&p, m, false});
      if (cfg.lsm) tasks.push_back({&p, m, true});
    }
  }
  std::vector<EvalReport> reports(tasks.size());
  std::vector<char> reused(tasks.size(), 0);
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const Task& t = tasks[i];
      const std::string name = t.lsm ? t.method + kLsmSuffix : t.method;
      const TaskPaths paths = task_paths(result.run_dir, t.pair->pair_id, name);
      bool done = false;
      if (!cfg.force && fs::exists(paths.report)) {
        try {
          reports[i] = report_from_json(read_json(paths.report));
          reused[i] = 1;
          done = true;
        } catch (const Error&) {
          // unreadable report: recompute
        }
      }
      if (!done) reports[i] = run_task(*t.pair, t.method, t.lsm, cfg, result.run_dir);
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress(reports[i], reused[i] != 0);
      }
    }
  };
  const int n = std::max(1, std::min<int>(cfg.workers, static_cast<int>(tasks.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < n; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::sort(reports.begin(), reports.end(), [](const EvalReport& a, const EvalReport& b) {
    return std::tie(a.pair_id, a.method) < std::tie(b.pair_id, b.method);
  });
  result.skipped = static_cast<std::size_t>(std::count(reused.begin(), reused.end(), 1));
  result.reports = std::move(reports);
  result.stats = aggregate(result.reports);
  write_stats(result.stats, result.run_dir);
  return result;
}

std::vector<fs::path> write_report_tables(const std::vector<EvalReport>& reports,
                                          const AggregateStats& stats, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  {
    std::ostringstream os;
    os << "method,total,successes,success_rate\n";
    for (const auto& m : stats.methods) {
      os << m.method << "," << m.total << "," << m.successes << "," << fmt(m.success_rate) << "\n";
    }
    written.push_back(out_dir / "success_rate.csv");
    write_text(written.back(), os.str());
  }
  for (const auto& metric : metric_names()) {
    std::ostringstream os;
    os << "pair_id,method," << metric << "\n";
    for (const auto& r : reports) {
      if (!r.success) continue;
      const double v = metric_value(r, metric);
      if (std::isfinite(v)) os << r.pair_id << "," << r.method << "," << fmt(v) << "\n";
    }
    written.push_back(out_dir / (metric + ".csv"));
    write_text(written.back(), os.str());
  }
  {
    std::ostringstream os;
    os << "method,pairs";
    for (const auto& metric : metric_names()) os << "," << metric;
    os << "\n";
    for (const auto& l : stats.lsm) {
      os << l.method << "," << l.pairs;
      for (const auto& metric : metric_names()) {
        const auto it = l.change.find(metric);
        os << "," << (it != l.change.end() && it->second ? fmt(*it->second) : "");
      }
      os << "\n";
    }
    written.push_back(out_dir / "lsm_changes.csv");
    write_text(written.back(), os.str());
  }
  return written;
}

}  // namespace satstereo
