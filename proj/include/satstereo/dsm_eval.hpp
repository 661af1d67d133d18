#pragma once

#include <string>

#include <json.hpp>

#include "satstereo/dsm.hpp"

namespace satstereo {

struct Shift3 {
  double dx = 0.0, dy = 0.0, dz = 0.0;
};

struct Coregistration {
  Shift3 shift;
  double pre_rmse = 0.0;
  double post_rmse = 0.0;
  int iterations = 0;
  std::size_t cells = 0;          ///< mutually valid cells at the final shift
  bool horizontal_degenerate = false;  ///< dx/dy unobservable (flat surfaces)
};

inline constexpr std::size_t kMinCoregistrationCells = 100;

/// Translation-only least-squares surface matching: finds (dx, dy, dz) that
/// minimizes sum (generated(x+dx, y+dy) + dz - truth(x, y))^2 over truth cell
/// centers. Never returns a shift with a larger RMSE than the zero shift.
/// Throws InsufficientDataError below 100 mutually valid cells and
/// NonConvergenceError if the iterate leaves the overlap.
Coregistration coregister(const DsmGrid& generated, const DsmGrid& truth);

/// `generated` sampled bilinearly at the truth cell centers moved by the shift,
/// with dz added; a cell is valid only when all four neighbours are.
DsmGrid resample_to(const DsmGrid& generated, const GridSpec& target, const Shift3& shift = {});

/// Percent of truth-valid cells that are valid in `generated` (same grid).
double completeness(const DsmGrid& generated, const DsmGrid& truth);

/// RMS elevation difference over mutually valid cells (same grid).
double dsm_rmse(const DsmGrid& generated, const DsmGrid& truth);

/// (m_lsm - m_plain) / m_plain * 100.
double relative_change(double m_lsm, double m_plain);

struct DsmScores {
  double completeness = 0.0;
  double rmse = std::numeric_limits<double>::quiet_NaN();
  Coregistration registration;
  bool registered = false;
};

/// Co-registers (when the overlap allows), resamples onto the truth grid and
/// scores completeness and RMSE there.
DsmScores evaluate_dsm(const DsmGrid& generated, const DsmGrid& truth);

struct EvalReport {
  std::string pair_id;
  std::string method;
  bool success = false;
  std::string failure;  ///< reason when success is false
  double inlier_ratio = std::numeric_limits<double>::quiet_NaN();
  double epipolar_rms = std::numeric_limits<double>::quiet_NaN();
  std::size_t inliers = 0;
  std::size_t matches = 0;
  double completeness = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  Shift3 shift;
  bool dsm = false;  ///< completeness/rmse/shift are populated
};

nlohmann::json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

}  // namespace satstereo
