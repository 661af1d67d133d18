#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "satstereo/dense.hpp"
#include "satstereo/dsm_eval.hpp"
#include "satstereo/lsm.hpp"
#include "satstereo/matches.hpp"
#include "satstereo/orientation.hpp"
#include "satstereo/pair_selection.hpp"

namespace satstereo {

inline constexpr const char* kLsmSuffix = "_lsm";

/// Where LSM refinement sits relative to RANSAC.
enum class LsmOrder { Before, After };

LsmOrder parse_lsm_order(const std::string& s);
const char* to_string(LsmOrder order);

/// Relative orientation with LSM-refined matches. `Before` refines every match
/// and runs RANSAC on the result; `After` runs RANSAC on the raw matches, then
/// refines them and refits the bias on the refined consensus. `matches` is
/// replaced by the refined set.
Orientation orient_with_lsm(const RpcModel& m1, const RpcModel& m2, const GrayImage& img1,
                            const GrayImage& img2, MatchSet& matches,
                            const OrientationConfig& cfg, LsmOrder order,
                            const LsmConfig& lsm = {});

struct RunConfig {
  std::filesystem::path manifest;  ///< tile manifest, or a pairs manifest from `pairs`
  std::vector<std::string> methods{"baseline"};
  SelectionConfig selection;
  OrientationConfig orientation;
  MatchOptions matching;
  LsmConfig lsm_config;
  SgmConfig sgm;
  bool lsm = false;    ///< also run every method with LSM refinement as `<method>_lsm`
  LsmOrder lsm_order = LsmOrder::Before;
  bool dense = true;
  double cell_size = 0.5;
  std::filesystem::path output_dir = "runs";
  std::string run_id = "run";
  int workers = 1;
  std::uint64_t seed = 0;
  bool force = false;  ///< recompute tasks that already have a report
};

/// Reads the JSON config; relative paths resolve against `base`.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
nlohmann::json run_config_to_json(const RunConfig& cfg);
void validate(const RunConfig& cfg);

/// Worker count from SATSTEREO_WORKERS, or `fallback` when unset.
int default_workers(int fallback = 1);

/// Matches for one pair: the built-in baseline or an imported CSV.
MatchSet match_pair(const PairEntry& pair, const std::string& method, const MatchOptions& opts);

/// CSV path of an external method for a pair (the `{pair}` pattern expanded).
std::optional<std::filesystem::path> match_file_for(const PairEntry& pair,
                                                    const std::string& method);

struct TaskPaths {
  std::filesystem::path dir, matches, orientation, dsm, report;
};
TaskPaths task_paths(const std::filesystem::path& run_dir, const std::string& pair_id,
                     const std::string& method);

/// One (pair, method) evaluation. Never throws for per-pair failures; the
/// reason is recorded in the report.
EvalReport run_task(const PairEntry& pair, const std::string& method, bool use_lsm,
                    const RunConfig& cfg, const std::filesystem::path& run_dir);

struct FiveNumber {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
  std::size_t n = 0;
};

/// Tukey five-number summary (quartiles are medians of the lower/upper
/// halves, the median excluded from both halves for odd n).
std::optional<FiveNumber> five_number(std::vector<double> values);

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"inlier_ratio", "epipolar_rms", "completeness",
                                              "rmse"};
  return names;
}

double metric_value(const EvalReport& r, const std::string& metric);

struct MethodStats {
  std::string method;
  std::size_t total = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;
  std::map<std::string, std::optional<FiveNumber>> summaries;
};

struct LsmChange {
  std::string method;  ///< plain method name
  std::size_t pairs = 0;  ///< pairs where both variants succeeded
  std::map<std::string, std::optional<double>> change;  ///< percent, per metric
};

struct AggregateStats {
  std::vector<MethodStats> methods;
  std::vector<LsmChange> lsm;
};

/// Success rate over all reports; summaries over successful ones only; LSM
/// relative change of the per-method means over pairs where both the plain and
/// the `_lsm` run succeeded.
AggregateStats aggregate(const std::vector<EvalReport>& reports);

nlohmann::json stats_to_json(const AggregateStats& s);
/// Long format: method,metric,statistic,value.
std::string stats_to_csv(const AggregateStats& s);

struct RunResult {
  std::filesystem::path run_dir;
  std::vector<EvalReport> reports;
  AggregateStats stats;
  std::size_t skipped = 0;  ///< tasks reused from an earlier run
};

using ProgressFn = std::function<void(const EvalReport&, bool reused)>;

RunResult run_pipeline(const RunConfig& cfg, const ProgressFn& progress = {});

/// Collects every report.json below a run directory, sorted by (pair, method).
std::vector<EvalReport> collect_reports(const std::filesystem::path& run_dir);

/// Writes stats.json and stats.csv into the run directory.
void write_stats(const AggregateStats& stats, const std::filesystem::path& run_dir);

/// Figure-style tables: success_rate.csv, per-pair metric tables, lsm_changes.csv.
std::vector<std::filesystem::path> write_report_tables(const std::vector<EvalReport>& reports,
                                                       const AggregateStats& stats,
                                                       const std::filesystem::path& out_dir);

}  // namespace satstereo
