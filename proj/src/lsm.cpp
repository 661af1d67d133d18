#include "satstereo/lsm.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "satstereo/errors.hpp"

namespace satstereo {

const char* to_string(LsmStatus s) {
  switch (s) {
    case LsmStatus::Converged: return "converged";
    case LsmStatus::Diverged: return "diverged";
    case LsmStatus::MaxIterations: return "max_iterations";
    case LsmStatus::Textureless: return "textureless";
    case LsmStatus::OutOfBounds: return "out_of_bounds";
  }
  return "unknown";
}

LsmResult lsm_refine(const GrayImage& img1, const GrayImage& img2, const ImagePoint& p1,
                     const ImagePoint& p2, const LsmConfig& cfg) {
  if (cfg.window < 3 || cfg.window % 2 == 0) throw ValidationError("LSM window must be odd and >= 3");
  LsmResult result{p2, false, 0, LsmStatus::MaxIterations};
  const int half = cfg.window / 2;
  // One extra pixel on each side for the central-difference gradients.
  const double margin = half + 1.0;
  auto inside = [&](const GrayImage& img, const ImagePoint& p, double extra) {
    return p.sample - margin - extra >= 0.0 && p.line - margin - extra >= 0.0 &&
           p.sample + margin + extra <= img.width() - 1 &&
           p.line + margin + extra <= img.height() - 1;
  };
  if (!inside(img1, p1, 0.0) || !inside(img2, p2, 0.0)) {
    result.status = LsmStatus::OutOfBounds;
    return result;
  }

  const int n = cfg.window * cfg.window;
  Eigen::VectorXd tmpl(n);
  Eigen::VectorXd us(n), vs(n);
  {
    int k = 0;
    for (int v = -half; v <= half; ++v) {
      for (int u = -half; u <= half; ++u, ++k) {
        tmpl[k] = img1.bilinear(p1.sample + u, p1.line + v);
        us[k] = u;
        vs[k] = v;
      }
    }
  }
  const double mean = tmpl.mean();
  const double stddev = std::sqrt((tmpl.array() - mean).square().mean());
  if (stddev < cfg.min_template_std) {
    result.status = LsmStatus::Textureless;
    return result;
  }

  // Geometry: x2 = p2 + (dx + (1 + a11) u + a12 v, dy + a21 u + (1 + a22) v).
  // Radiometry: template ~= r0 + r1 * img2(x2).
  Eigen::Matrix<double, 8, 1> q;
  q << 0, 0, 0, 0, 0, 0, 0, 1;
  const double norm = static_cast<double>(half);
  Eigen::MatrixXd jac(n, 8);
  Eigen::VectorXd res(n);
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    result.iterations = it;
    for (int k = 0; k < n; ++k) {
      const double x = p2.sample + q[0] + us[k] + q[2] * us[k] + q[3] * vs[k];
      const double y = p2.line + q[1] + vs[k] + q[4] * us[k] + q[5] * vs[k];
      const double g = img2.bilinear(x, y);
      const double gx = 0.5 * (img2.bilinear(x + 1.0, y) - img2.bilinear(x - 1.0, y));
      const double gy = 0.5 * (img2.bilinear(x, y + 1.0) - img2.bilinear(x, y - 1.0));
      if (!std::isfinite(g) || !std::isfinite(gx) || !std::isfinite(gy)) {
        result.status = LsmStatus::Diverged;
        result.p2 = p2;
        return result;
      }
      res[k] = q[6] + q[7] * g - tmpl[k];
      const double sx = q[7] * gx, sy = q[7] * gy;
      jac.row(k) << sx, sy, sx * us[k], sx * vs[k], sy * us[k], sy * vs[k], 1.0, g;
    }
    // Affine columns grow with u, v; rescale by the half window for conditioning.
    Eigen::Matrix<double, 8, 1> colscale;
    colscale << 1, 1, norm, norm, norm, norm, 1, 1;
    const Eigen::MatrixXd js = jac * colscale.cwiseInverse().asDiagonal();
    const Eigen::Matrix<double, 8, 8> normal = js.transpose() * js;
    Eigen::LDLT<Eigen::Matrix<double, 8, 8>> ldlt(normal);
    if (ldlt.info() != Eigen::Success) {
      result.status = LsmStatus::Diverged;
      return result;
    }
    const Eigen::Matrix<double, 8, 1> step_scaled = ldlt.solve(-js.transpose() * res);
    const Eigen::Matrix<double, 8, 1> step = step_scaled.cwiseQuotient(colscale);
    if (!step.allFinite()) {
      result.status = LsmStatus::Diverged;
      return result;
    }
    q += step;
    const double shift = std::hypot(q[0], q[1]);
    const double update = std::hypot(step[0], step[1]);
    if (update > cfg.max_shift_px || shift > cfg.max_shift_px ||
        !inside(img2, {p2.sample + q[0], p2.line + q[1]}, 0.0)) {
      result.status = LsmStatus::Diverged;
      result.p2 = p2;
      return result;
    }
    if (update < cfg.convergence_px) {
      result.p2 = {p2.sample + q[0], p2.line + q[1]};
      result.converged = true;
      result.status = LsmStatus::Converged;
      return result;
    }
  }
  result.status = LsmStatus::MaxIterations;
  result.p2 = p2;
  return result;
}

RefinedMatches refine_matchset(const GrayImage& img1, const GrayImage& img2,
                               const MatchSet& matches, const LsmConfig& cfg) {
  RefinedMatches out{matches, {}};
  for (auto& m : out.matches.matches) {
    const LsmResult r = lsm_refine(img1, img2, m.p1, m.p2, cfg);
    switch (r.status) {
      case LsmStatus::Converged:
        m.p2 = r.p2;
        ++out.counts.refined;
        break;
      case LsmStatus::Textureless:
      case LsmStatus::OutOfBounds:
        ++out.counts.rejected;
        break;
      default:
        ++out.counts.kept;
        break;
    }
  }
  sanitize(out.matches);
  return out;
}

}  // namespace satstereo
