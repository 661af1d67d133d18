#include "satstereo/orientation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "satstereo/errors.hpp"
#include "satstereo/random.hpp"

namespace satstereo {

namespace {

constexpr int kSampleSize = 3;
constexpr int kFitIterations = 10;
constexpr double kSingularCutoff = 1e-3;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Bias parameterized as a displacement in centered, scaled coordinates:
// A(x) = x + t + M (x - c) / S, theta = (t_s, t_l, m11, m12, m21, m22).
struct Frame {
  double cs, cl, scale;
};

Frame make_frame(ImageSize size, const std::vector<PreparedMatch>& matches) {
  if (size.width > 0 && size.height > 0) {
    return {0.5 * size.width, 0.5 * size.height, 0.5 * std::max(size.width, size.height)};
  }
  double smin = std::numeric_limits<double>::infinity(), smax = -smin;
  double lmin = smin, lmax = -smin;
  for (const auto& m : matches) {
    smin = std::min(smin, m.p2.sample);
    smax = std::max(smax, m.p2.sample);
    lmin = std::min(lmin, m.p2.line);
    lmax = std::max(lmax, m.p2.line);
  }
  const double scale = std::max({0.5 * (smax - smin), 0.5 * (lmax - lmin), 1.0});
  return {0.5 * (smin + smax), 0.5 * (lmin + lmax), scale};
}

Eigen::Matrix<double, 6, 1> to_theta(const BiasCorrection& b, const Frame& f) {
  const auto& a = b.a;
  Eigen::Matrix<double, 6, 1> t;
  t[2] = (a[1] - 1.0) * f.scale;
  t[3] = a[2] * f.scale;
  t[4] = a[4] * f.scale;
  t[5] = (a[5] - 1.0) * f.scale;
  t[0] = a[0] + (a[1] - 1.0) * f.cs + a[2] * f.cl;
  t[1] = a[3] + a[4] * f.cs + (a[5] - 1.0) * f.cl;
  return t;
}

BiasCorrection from_theta(const Eigen::Matrix<double, 6, 1>& t, const Frame& f) {
  BiasCorrection b;
  b.a[1] = 1.0 + t[2] / f.scale;
  b.a[2] = t[3] / f.scale;
  b.a[4] = t[4] / f.scale;
  b.a[5] = 1.0 + t[5] / f.scale;
  b.a[0] = t[0] - (t[2] * f.cs + t[3] * f.cl) / f.scale;
  b.a[3] = t[1] - (t[4] * f.cs + t[5] * f.cl) / f.scale;
  return b;
}

// Signed residual along the normal of the closest corrected segment, and the
// gradient of that residual with respect to theta.
double residual_and_gradient(const PreparedMatch& m, const BiasCorrection& bias, const Frame& f,
                             Eigen::Matrix<double, 1, 6>& grad) {
  Polyline corrected;
  corrected.reserve(m.curve.size());
  for (const auto& v : m.curve) corrected.push_back(bias.apply(v));
  const CurveProjection cp = closest_on_curve(m.p2, corrected);
  const std::size_t k = cp.segment;
  const ImagePoint& a = corrected[k];
  const ImagePoint& b = corrected[k + 1];
  double ds = b.sample - a.sample, dl = b.line - a.line;
  const double len = std::hypot(ds, dl);
  double ns, nl;
  if (len > 0.0) {
    ns = -dl / len;
    nl = ds / len;
  } else {
    ns = 0.0;
    nl = 1.0;
  }
  // Parameter of the closest point along the segment, reused on the raw curve.
  double t = 0.0;
  if (len > 0.0) t = ((cp.closest.sample - a.sample) * ds + (cp.closest.line - a.line) * dl) / (len * len);
  const ImagePoint& ra = m.curve[k];
  const ImagePoint& rb = m.curve[k + 1];
  const double qs = ra.sample + t * (rb.sample - ra.sample);
  const double ql = ra.line + t * (rb.line - ra.line);
  const double xs = (qs - f.cs) / f.scale;
  const double xl = (ql - f.cl) / f.scale;
  grad << -ns, -nl, -ns * xs, -ns * xl, -nl * xs, -nl * xl;
  return ns * (m.p2.sample - cp.closest.sample) + nl * (m.p2.line - cp.closest.line);
}

struct Score {
  std::size_t inliers = 0;
  double rms = std::numeric_limits<double>::infinity();
};

Score score(const std::vector<PreparedMatch>& matches, const BiasCorrection& bias,
            double threshold) {
  Score s;
  double ss = 0.0;
  for (const auto& m : matches) {
    if (!m.valid) continue;
    const double e = epipolar_error(m, bias);
    if (e < threshold) {
      ++s.inliers;
      ss += e * e;
    }
  }
  if (s.inliers > 0) s.rms = std::sqrt(ss / static_cast<double>(s.inliers));
  return s;
}

bool better(const Score& a, const Score& b) {
  if (a.inliers != b.inliers) return a.inliers > b.inliers;
  return a.rms < b.rms;
}

}  // namespace

ImagePoint BiasCorrection::invert(const ImagePoint& p) const {
  const double det = determinant();
  if (std::abs(det) < 1e-12) throw ValidationError("bias correction is not invertible");
  const double s = p.sample - a[0];
  const double l = p.line - a[3];
  return {(a[5] * s - a[2] * l) / det, (-a[4] * s + a[1] * l) / det};
}

void validate(const OrientationConfig& cfg) {
  if (!(cfg.max_epipolar_rms > 0.0)) throw ValidationError("T must be positive");
  if (!(cfg.ransac_threshold > 0.0)) throw ValidationError("RANSAC threshold must be positive");
  if (cfg.ransac_iterations < 1) throw ValidationError("RANSAC needs at least one iteration");
  if (cfg.min_inliers < 1) throw ValidationError("min_inliers must be positive");
  if (cfg.epipolar_samples < 2) throw ValidationError("epipolar sweep needs at least 2 samples");
}

bool orientation_gate(std::size_t inliers, double epipolar_rms, const OrientationConfig& cfg) {
  return inliers >= static_cast<std::size_t>(cfg.min_inliers) &&
         epipolar_rms <= cfg.max_epipolar_rms;
}

std::pair<double, double> epipolar_height_range(const RpcModel& m1) {
  const auto& c = m1.coefficients();
  return {c.h_off - c.h_scale, c.h_off + c.h_scale};
}

double epipolar_error(const RpcModel& m1, const RpcModel& m2, const BiasCorrection& bias,
                      const Match& match, int samples) {
  const auto [h0, h1] = epipolar_height_range(m1);
  Polyline curve = epipolar_curve(m1, m2, match.p1, h0, h1, samples);
  for (auto& v : curve) v = bias.apply(v);
  return point_to_curve_distance(match.p2, curve);
}

std::vector<PreparedMatch> prepare_matches(const RpcModel& m1, const RpcModel& m2,
                                           const MatchSet& matches, int samples) {
  const auto [h0, h1] = epipolar_height_range(m1);
  std::vector<PreparedMatch> out;
  out.reserve(matches.size());
  for (const auto& m : matches.matches) {
    PreparedMatch pm;
    pm.p2 = m.p2;
    try {
      pm.curve = epipolar_curve(m1, m2, m.p1, h0, h1, samples);
      pm.valid = true;
    } catch (const Error&) {
      pm.valid = false;
    }
    out.push_back(std::move(pm));
  }
  return out;
}

double epipolar_error(const PreparedMatch& m, const BiasCorrection& bias) {
  if (!m.valid) return kNaN;
  double best = std::numeric_limits<double>::infinity();
  ImagePoint a = bias.apply(m.curve[0]);
  for (std::size_t i = 1; i < m.curve.size(); ++i) {
    const ImagePoint b = bias.apply(m.curve[i]);
    const double ds = b.sample - a.sample, dl = b.line - a.line;
    const double len2 = ds * ds + dl * dl;
    double t = 0.0;
    if (len2 > 0.0) {
      t = std::clamp(((m.p2.sample - a.sample) * ds + (m.p2.line - a.line) * dl) / len2, 0.0, 1.0);
    }
    const double d = std::hypot(m.p2.sample - (a.sample + t * ds), m.p2.line - (a.line + t * dl));
    best = std::min(best, d);
    a = b;
  }
  return best;
}

namespace {

Orientation summarize(const std::vector<PreparedMatch>& prepared, const BiasCorrection& bias,
                      const OrientationConfig& cfg, const std::string& pair_id) {
  Orientation o;
  o.pair_id = pair_id;
  o.bias = bias;
  o.inlier_mask.assign(prepared.size(), false);
  o.epipolar_errors.assign(prepared.size(), kNaN);
  double ss = 0.0;
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    if (!prepared[i].valid) {
      ++o.invalid_matches;
      continue;
    }
    const double e = epipolar_error(prepared[i], bias);
    o.epipolar_errors[i] = e;
    if (e < cfg.ransac_threshold) {
      o.inlier_mask[i] = true;
      ++o.inliers;
      ss += e * e;
    }
  }
  o.inlier_ratio = prepared.empty() ? 0.0
                                    : static_cast<double>(o.inliers) /
                                          static_cast<double>(prepared.size());
  o.epipolar_rms = o.inliers > 0 ? std::sqrt(ss / static_cast<double>(o.inliers)) : kNaN;
  o.success = o.inliers > 0 && orientation_gate(o.inliers, o.epipolar_rms, cfg);
  return o;
}

}  // namespace

BiasCorrection fit_bias(const std::vector<PreparedMatch>& matches,
                        const std::vector<std::size_t>& subset, const BiasCorrection& start,
                        ImageSize frame_size) {
  const Frame f = make_frame(frame_size, matches);
  Eigen::Matrix<double, 6, 1> theta = to_theta(start, f);
  const auto rows = static_cast<Eigen::Index>(subset.size());
  Eigen::MatrixXd jac(rows, 6);
  Eigen::VectorXd res(rows);
  for (int it = 0; it < kFitIterations; ++it) {
    const BiasCorrection current = from_theta(theta, f);
    for (Eigen::Index r = 0; r < rows; ++r) {
      Eigen::Matrix<double, 1, 6> g;
      res[r] = residual_and_gradient(matches[subset[static_cast<std::size_t>(r)]], current, f, g);
      jac.row(r) = g;
    }
    // Minimum-norm step: unobservable directions (motion along the epipolar
    // curves) are left untouched.
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || !(sv[0] > 0.0)) break;
    Eigen::VectorXd ut_r = svd.matrixU().transpose() * res;
    Eigen::Matrix<double, 6, 1> step = Eigen::Matrix<double, 6, 1>::Zero();
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
      if (sv[i] > kSingularCutoff * sv[0]) step -= svd.matrixV().col(i) * (ut_r[i] / sv[i]);
    }
    theta += step;
    if (step.norm() < 1e-9) break;
  }
  return from_theta(theta, f);
}

Orientation evaluate_bias(const RpcModel& m1, const RpcModel& m2, const BiasCorrection& bias,
                          const MatchSet& matches, const OrientationConfig& cfg) {
  validate(cfg);
  return summarize(prepare_matches(m1, m2, matches, cfg.epipolar_samples), bias, cfg,
                   matches.pair_id);
}

Orientation ransac_bias(const RpcModel& m1, const RpcModel& m2, const MatchSet& matches,
                        const OrientationConfig& cfg) {
  validate(cfg);
  if (matches.size() < static_cast<std::size_t>(kSampleSize)) {
    throw InsufficientDataError("relative orientation needs at least 3 matches");
  }
  const auto prepared = prepare_matches(m1, m2, matches, cfg.epipolar_samples);
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    if (prepared[i].valid) valid.push_back(i);
  }
  if (valid.size() < static_cast<std::size_t>(kSampleSize)) {
    throw InsufficientDataError("fewer than 3 matches have a valid epipolar curve");
  }

  Rng rng(cfg.seed);
  BiasCorrection best_bias = BiasCorrection::identity();
  Score best = score(prepared, best_bias, cfg.ransac_threshold);
  for (int it = 0; it < cfg.ransac_iterations; ++it) {
    std::vector<std::size_t> sample;
    while (sample.size() < static_cast<std::size_t>(kSampleSize)) {
      const std::size_t pick = valid[static_cast<std::size_t>(rng.index(valid.size()))];
      if (std::find(sample.begin(), sample.end(), pick) == sample.end()) sample.push_back(pick);
    }
    const BiasCorrection hyp =
        fit_bias(prepared, sample, BiasCorrection::identity(), matches.size_b);
    if (!hyp.plausible()) continue;
    const Score s = score(prepared, hyp, cfg.ransac_threshold);
    if (better(s, best)) {
      best = s;
      best_bias = hyp;
    }
  }

  // One local-optimization pass: refit on every inlier of the best model.
  std::vector<std::size_t> inliers;
  for (std::size_t i : valid) {
    if (epipolar_error(prepared[i], best_bias) < cfg.ransac_threshold) inliers.push_back(i);
  }
  if (inliers.size() >= static_cast<std::size_t>(kSampleSize)) {
    const BiasCorrection refit = fit_bias(prepared, inliers, best_bias, matches.size_b);
    const Score s = score(prepared, refit, cfg.ransac_threshold);
    if (refit.plausible() && !better(best, s)) best_bias = refit;
  }

  return summarize(prepared, best_bias, cfg, matches.pair_id);
}

namespace {

nlohmann::json nullable(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

double from_nullable(const nlohmann::json& j) {
  return j.is_null() ? kNaN : j.get<double>();
}

}  // namespace

nlohmann::json orientation_to_json(const Orientation& o, const OrientationConfig& cfg) {
  nlohmann::json errors = nlohmann::json::array();
  for (double e : o.epipolar_errors) errors.push_back(nullable(e));
  return {{"pair_id", o.pair_id},
          {"bias", o.bias.a},
          {"inlier_mask", o.inlier_mask},
          {"epipolar_errors", errors},
          {"matches", o.inlier_mask.size()},
          {"inliers", o.inliers},
          {"invalid_matches", o.invalid_matches},
          {"inlier_ratio", o.inlier_ratio},
          {"epipolar_rms", nullable(o.epipolar_rms)},
          {"success", o.success},
          {"config",
           {{"T", cfg.max_epipolar_rms},
            {"ransac_threshold", cfg.ransac_threshold},
            {"ransac_iterations", cfg.ransac_iterations},
            {"min_inliers", cfg.min_inliers},
            {"seed", cfg.seed}}}};
}

Orientation orientation_from_json(const nlohmann::json& j) {
  Orientation o;
  try {
    o.pair_id = j.at("pair_id").get<std::string>();
    o.bias.a = j.at("bias").get<std::array<double, 6>>();
    o.inlier_mask = j.at("inlier_mask").get<std::vector<bool>>();
    for (const auto& e : j.at("epipolar_errors")) o.epipolar_errors.push_back(from_nullable(e));
    o.inliers = j.at("inliers").get<std::size_t>();
    o.invalid_matches = j.value("invalid_matches", std::size_t{0});
    o.inlier_ratio = j.at("inlier_ratio").get<double>();
    o.epipolar_rms = from_nullable(j.at("epipolar_rms"));
    o.success = j.at("success").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed orientation JSON: ") + e.what());
  }
  return o;
}

}  // namespace satstereo
