#include "satstereo/dsm_eval.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "satstereo/errors.hpp"

namespace satstereo {

namespace {

constexpr double kDegenerateCondition = 1e8;
constexpr double kStepTolerance = 1e-3;
constexpr int kMaxIterations = 50;

struct Fit {
  double rmse = std::numeric_limits<double>::infinity();
  std::size_t cells = 0;
  Eigen::Matrix3d normal = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
};

Fit linearize(const DsmGrid& generated, const DsmGrid& truth, const Shift3& s) {
  Fit f;
  double ss = 0.0;
  const GridSpec& spec = truth.spec();
  for (int row = 0; row < spec.height; ++row) {
    const double y = spec.center_y(row);
    for (int col = 0; col < spec.width; ++col) {
      const double t = truth.at(col, row);
      if (std::isnan(t)) continue;
      double gx = 0.0, gy = 0.0;
      const double g = generated.sample(spec.center_x(col) + s.dx, y + s.dy, &gx, &gy);
      if (std::isnan(g)) continue;
      const double r = g + s.dz - t;
      const Eigen::Vector3d j(gx, gy, 1.0);
      f.normal += j * j.transpose();
      f.rhs -= j * r;
      ss += r * r;
      ++f.cells;
    }
  }
  if (f.cells > 0) f.rmse = std::sqrt(ss / static_cast<double>(f.cells));
  return f;
}

double condition(const Eigen::Matrix3d& n) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(n);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace

Coregistration coregister(const DsmGrid& generated, const DsmGrid& truth) {
  Coregistration out;
  Shift3 cur;
  Fit fit = linearize(generated, truth, cur);
  if (fit.cells < kMinCoregistrationCells) {
    throw InsufficientDataError("co-registration needs at least 100 mutually valid cells, got " +
                                std::to_string(fit.cells));
  }
  out.pre_rmse = fit.rmse;
  out.horizontal_degenerate = condition(fit.normal) > kDegenerateCondition;

  const double reach = 0.5 * std::max(truth.spec().width, truth.spec().height) *
                       truth.spec().cell_size;
  for (int it = 0; it < kMaxIterations; ++it) {
    out.iterations = it + 1;
    Eigen::Vector3d step = Eigen::Vector3d::Zero();
    if (out.horizontal_degenerate) {
      step[2] = fit.rhs[2] / fit.normal(2, 2);
    } else {
      step = fit.normal.ldlt().solve(fit.rhs);
    }
    // Backtrack so the RMSE never increases.
    bool moved = false;
    Fit next;
    Shift3 cand;
    for (int halving = 0; halving < 12; ++halving) {
      cand = {cur.dx + step[0], cur.dy + step[1], cur.dz + step[2]};
      if (std::hypot(cand.dx, cand.dy) > reach) {
        throw NonConvergenceError("co-registration left the overlap region at (" +
                                      std::to_string(cand.dx) + ", " + std::to_string(cand.dy) +
                                      ", " + std::to_string(cand.dz) + ")",
                                  fit.rmse);
      }
      next = linearize(generated, truth, cand);
      if (next.cells >= kMinCoregistrationCells && next.rmse <= fit.rmse) {
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
    cur = cand;
    fit = next;
    if (!out.horizontal_degenerate && condition(fit.normal) > kDegenerateCondition) {
      out.horizontal_degenerate = true;
    }
    if (step.norm() < kStepTolerance) break;
  }
  if (out.horizontal_degenerate) {
    cur.dx = 0.0;
    cur.dy = 0.0;
    fit = linearize(generated, truth, cur);
    cur.dz += fit.rhs[2] / fit.normal(2, 2);
    fit = linearize(generated, truth, cur);
  }
  out.shift = cur;
  out.post_rmse = fit.rmse;
  out.cells = fit.cells;
  return out;
}

DsmGrid resample_to(const DsmGrid& generated, const GridSpec& target, const Shift3& shift) {
  DsmGrid out(target);
  for (int row = 0; row < target.height; ++row) {
    for (int col = 0; col < target.width; ++col) {
      const double z =
          generated.sample(target.center_x(col) + shift.dx, target.center_y(row) + shift.dy);
      if (!std::isnan(z)) out.at(col, row) = z + shift.dz;
    }
  }
  return out;
}

double completeness(const DsmGrid& generated, const DsmGrid& truth) {
  if (!(generated.spec() == truth.spec())) {
    throw ValidationError("completeness needs both DSMs on the same grid");
  }
  std::size_t total = 0, covered = 0;
  for (std::size_t i = 0; i < truth.values().size(); ++i) {
    if (std::isnan(truth.values()[i])) continue;
    ++total;
    if (!std::isnan(generated.values()[i])) ++covered;
  }
  if (total == 0) throw UndefinedMetricError("truth DSM has no valid cells");
  return 100.0 * static_cast<double>(covered) / static_cast<double>(total);
}

double dsm_rmse(const DsmGrid& generated, const DsmGrid& truth) {
  if (!(generated.spec() == truth.spec())) {
    throw ValidationError("RMSE needs both DSMs on the same grid");
  }
  std::size_t n = 0;
  double ss = 0.0;
  for (std::size_t i = 0; i < truth.values().size(); ++i) {
    const double d = generated.values()[i] - truth.values()[i];
    if (std::isnan(d)) continue;
    ss += d * d;
    ++n;
  }
  if (n == 0) throw UndefinedMetricError("no mutually valid cells for RMSE");
  return std::sqrt(ss / static_cast<double>(n));
}

double relative_change(double m_lsm, double m_plain) {
  if (m_plain == 0.0) throw UndefinedMetricError("relative change undefined for m_plain = 0");
  return (m_lsm - m_plain) / m_plain * 100.0;
}

DsmScores evaluate_dsm(const DsmGrid& generated, const DsmGrid& truth) {
  DsmScores s;
  try {
    s.registration = coregister(generated, truth);
    s.registered = true;
  } catch (const InsufficientDataError&) {
    s.registered = false;
  }
  const DsmGrid aligned = resample_to(generated, truth.spec(), s.registration.shift);
  s.completeness = completeness(aligned, truth);
  try {
    s.rmse = dsm_rmse(aligned, truth);
  } catch (const UndefinedMetricError&) {
    s.rmse = std::numeric_limits<double>::quiet_NaN();
  }
  return s;
}

namespace {

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

double number_or_nan(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.at(key).get<double>();
}

}  // namespace

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["pair_id"] = r.pair_id;
  j["method"] = r.method;
  j["success"] = r.success;
  if (!r.failure.empty()) j["failure"] = r.failure;
  j["matches"] = r.matches;
  j["inliers"] = r.inliers;
  j["inlier_ratio"] = number_or_null(r.inlier_ratio);
  j["epipolar_rms"] = number_or_null(r.epipolar_rms);
  j["completeness"] = r.dsm ? number_or_null(r.completeness) : nlohmann::json(nullptr);
  j["rmse"] = r.dsm ? number_or_null(r.rmse) : nlohmann::json(nullptr);
  if (r.dsm) {
    j["shift"] = {r.shift.dx, r.shift.dy, r.shift.dz};
  } else {
    j["shift"] = nullptr;
  }
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.pair_id = j.value("pair_id", "");
  r.method = j.value("method", "");
  r.success = j.value("success", false);
  r.failure = j.value("failure", "");
  r.matches = j.value("matches", std::size_t{0});
  r.inliers = j.value("inliers", std::size_t{0});
  r.inlier_ratio = number_or_nan(j, "inlier_ratio");
  r.epipolar_rms = number_or_nan(j, "epipolar_rms");
  r.completeness = number_or_nan(j, "completeness");
  r.rmse = number_or_nan(j, "rmse");
  if (j.contains("shift") && j.at("shift").is_array() && j.at("shift").size() == 3) {
    r.dsm = true;
    r.shift = {j["shift"][0].get<double>(), j["shift"][1].get<double>(),
               j["shift"][2].get<double>()};
  }
  return r;
}

}  // namespace satstereo
