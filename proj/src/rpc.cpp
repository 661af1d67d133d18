#include "satstereo/rpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

#include "satstereo/errors.hpp"

namespace satstereo {

namespace {

constexpr double kDomainLimit = 1.5;
constexpr double kSingularDenominator = 1e-12;
constexpr double kJacobianStep = 1e-6;
constexpr double kInverseTolerancePx = 1e-6;
constexpr int kMaxIterations = 50;
constexpr double kMaxTriangulationCondition = 1e12;

double dot20(const std::array<double, 20>& a, const std::array<double, 20>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < 20; ++i) s += a[i] * b[i];
  return s;
}

void normalize_pair(std::array<double, 20>& num, std::array<double, 20>& den,
                    const char* name) {
  const double c = den[0];
  if (!std::isfinite(c) || std::abs(c) < kSingularDenominator) {
    throw ValidationError(std::string("RPC ") + name +
                          " denominator constant term is zero");
  }
  if (c == 1.0) return;
  for (auto& v : num) v /= c;
  for (auto& v : den) v /= c;
  den[0] = 1.0;
}

Eigen::Vector2d as_vec(const ImagePoint& p) { return {p.sample, p.line}; }

}  // namespace

std::array<double, 20> rpc_terms(double p, double l, double h) {
  return {1.0,       l,         p,         h,         l * p,
          l * h,     p * h,     l * l,     p * p,     h * h,
          p * l * h, l * l * l, l * p * p, l * h * h, l * l * p,
          p * p * p, p * h * h, l * l * h, p * p * h, h * h * h};
}

RpcModel::RpcModel(RpcCoefficients coeffs) : c_(std::move(coeffs)) {
  const double scales[] = {c_.lat_scale, c_.lon_scale, c_.h_scale, c_.line_scale,
                           c_.samp_scale};
  for (double s : scales) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw ValidationError("RPC scales must be strictly positive");
    }
  }
  normalize_pair(c_.line_num, c_.line_den, "line");
  normalize_pair(c_.samp_num, c_.samp_den, "sample");
}

Eigen::Vector3d RpcModel::normalize(const GroundPoint& g) const {
  return {(g.lat - c_.lat_off) / c_.lat_scale, (g.lon - c_.lon_off) / c_.lon_scale,
          (g.h - c_.h_off) / c_.h_scale};
}

GroundPoint RpcModel::denormalize(const Eigen::Vector3d& plh) const {
  return {plh[0] * c_.lat_scale + c_.lat_off, plh[1] * c_.lon_scale + c_.lon_off,
          plh[2] * c_.h_scale + c_.h_off};
}

ImagePoint RpcModel::project_normalized(const Eigen::Vector3d& plh) const {
  const auto t = rpc_terms(plh[0], plh[1], plh[2]);
  const double line_den = dot20(t, c_.line_den);
  const double samp_den = dot20(t, c_.samp_den);
  if (std::abs(line_den) < kSingularDenominator ||
      std::abs(samp_den) < kSingularDenominator) {
    throw SingularProjectionError("RPC denominator vanishes at the given point");
  }
  const double line = dot20(t, c_.line_num) / line_den;
  const double samp = dot20(t, c_.samp_num) / samp_den;
  return {samp * c_.samp_scale + c_.samp_off, line * c_.line_scale + c_.line_off};
}

bool RpcModel::in_domain(const GroundPoint& g) const {
  const Eigen::Vector3d n = normalize(g);
  return n.cwiseAbs().maxCoeff() <= kDomainLimit;
}

ImagePoint project(const RpcModel& model, const GroundPoint& g) {
  return model.project_normalized(model.normalize(g));
}

ProjectionResult project_checked(const RpcModel& model, const GroundPoint& g) {
  return {project(model, g), model.in_domain(g)};
}

GroundPoint inverse_project(const RpcModel& model, const ImagePoint& p, double h) {
  if (!std::isfinite(h)) throw ValidationError("inverse projection height must be finite");
  const double hn = (h - model.coefficients().h_off) / model.coefficients().h_scale;
  const Eigen::Vector2d target = as_vec(p);

  auto eval = [&](const Eigen::Vector2d& pl) {
    return as_vec(model.project_normalized({pl[0], pl[1], hn}));
  };

  Eigen::Vector2d x = Eigen::Vector2d::Zero();
  double residual = std::numeric_limits<double>::infinity();
  Eigen::Matrix2d jac;
  bool have_jac = false;
  for (int it = 0; it < kMaxIterations; ++it) {
    const Eigen::Vector2d r = eval(x) - target;
    residual = r.norm();
    if (residual < kInverseTolerancePx) {
      // One more step with the last Jacobian takes the answer to round-off
      // level at the cost of a single evaluation.
      if (have_jac && residual > 0.0) {
        const Eigen::Vector2d polished = x - jac.inverse() * r;
        if ((eval(polished) - target).norm() < residual) x = polished;
      }
      return model.denormalize({x[0], x[1], hn});
    }

    for (int k = 0; k < 2; ++k) {
      Eigen::Vector2d lo = x, hi = x;
      lo[k] -= kJacobianStep;
      hi[k] += kJacobianStep;
      jac.col(k) = (eval(hi) - eval(lo)) / (2.0 * kJacobianStep);
    }
    const double det = jac.determinant();
    if (!(std::abs(det) > 1e-12 * jac.squaredNorm())) {
      throw NonConvergenceError("inverse projection Jacobian is singular", residual);
    }
    have_jac = true;
    x -= jac.inverse() * r;
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e3) {
      throw NonConvergenceError("inverse projection diverged", residual);
    }
  }
  throw NonConvergenceError("inverse projection did not converge in 50 iterations",
                            residual);
}

double reprojection_rms(const RpcModel& m1, const RpcModel& m2,
                        const ImagePoint& p1, const ImagePoint& p2,
                        const GroundPoint& g) {
  const ImagePoint q1 = project(m1, g);
  const ImagePoint q2 = project(m2, g);
  const double ss = (q1.sample - p1.sample) * (q1.sample - p1.sample) +
                    (q1.line - p1.line) * (q1.line - p1.line) +
                    (q2.sample - p2.sample) * (q2.sample - p2.sample) +
                    (q2.line - p2.line) * (q2.line - p2.line);
  return std::sqrt(ss / 4.0);
}

Triangulation triangulate(const RpcModel& m1, const RpcModel& m2,
                          const ImagePoint& p1, const ImagePoint& p2) {
  const GroundPoint start = inverse_project(m1, p1, m1.coefficients().h_off);
  return triangulate(m1, m2, p1, p2, start);
}

Triangulation triangulate(const RpcModel& m1, const RpcModel& m2,
                          const ImagePoint& p1, const ImagePoint& p2,
                          const GroundPoint& initial) {
  // Unknowns are normalized with respect to the first model.
  auto residuals = [&](const Eigen::Vector3d& x) {
    const GroundPoint g = m1.denormalize(x);
    const ImagePoint q1 = m1.project_normalized(x);
    const ImagePoint q2 = project(m2, g);
    return Eigen::Vector4d(q1.sample - p1.sample, q1.line - p1.line,
                           q2.sample - p2.sample, q2.line - p2.line);
  };

  Eigen::Vector3d x = m1.normalize(initial);
  for (int it = 0; it < kMaxIterations; ++it) {
    const Eigen::Vector4d r = residuals(x);
    Eigen::Matrix<double, 4, 3> jac;
    for (int k = 0; k < 3; ++k) {
      Eigen::Vector3d lo = x, hi = x;
      lo[k] -= kJacobianStep;
      hi[k] += kJacobianStep;
      jac.col(k) = (residuals(hi) - residuals(lo)) / (2.0 * kJacobianStep);
    }
    const Eigen::Matrix3d normal = jac.transpose() * jac;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(normal, Eigen::EigenvaluesOnly);
    const double lmin = eig.eigenvalues()[0];
    const double lmax = eig.eigenvalues()[2];
    if (!(lmin > 0.0) || lmax / lmin > kMaxTriangulationCondition) {
      throw DegenerateGeometryError("viewing rays are numerically parallel");
    }
    const Eigen::Vector3d step = normal.ldlt().solve(-jac.transpose() * r);
    x += step;
    if (!x.allFinite()) throw DegenerateGeometryError("triangulation diverged");
    if (step.norm() < 1e-13) break;
  }
  const GroundPoint g = m1.denormalize(x);
  return {g, reprojection_rms(m1, m2, p1, p2, g)};
}

Polyline epipolar_curve(const RpcModel& src, const RpcModel& dst, const ImagePoint& p,
                        double h_min, double h_max, int n) {
  if (!(h_min < h_max)) throw ValidationError("epipolar sweep needs h_min < h_max");
  if (n < 2) throw ValidationError("epipolar sweep needs at least 2 samples");
  Polyline curve;
  curve.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double h = h_min + (h_max - h_min) * static_cast<double>(i) / (n - 1);
    curve.push_back(project(dst, inverse_project(src, p, h)));
  }
  return curve;
}

CurveProjection closest_on_curve(const ImagePoint& p, const Polyline& curve) {
  if (curve.size() < 2) throw ValidationError("curve needs at least 2 vertices");
  CurveProjection best{curve.front(), 0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
    const double ax = curve[i].sample, ay = curve[i].line;
    const double dx = curve[i + 1].sample - ax, dy = curve[i + 1].line - ay;
    const double len2 = dx * dx + dy * dy;
    double t = 0.0;
    if (len2 > 0.0) {
      t = std::clamp(((p.sample - ax) * dx + (p.line - ay) * dy) / len2, 0.0, 1.0);
    }
    const ImagePoint q{ax + t * dx, ay + t * dy};
    const double d = std::hypot(p.sample - q.sample, p.line - q.line);
    if (d < best.distance) best = {q, i, d};
  }
  return best;
}

double point_to_curve_distance(const ImagePoint& p, const Polyline& curve) {
  return closest_on_curve(p, curve).distance;
}

LocalFrame::LocalFrame(const GroundPoint& origin) : origin_(origin) {
  constexpr double a = 6378137.0;
  constexpr double e2 = 6.69437999014e-3;
  const double phi = origin.lat * std::numbers::pi / 180.0;
  const double s = std::sin(phi);
  const double w = 1.0 - e2 * s * s;
  const double meridional = a * (1.0 - e2) / (w * std::sqrt(w));
  const double prime_vertical = a / std::sqrt(w);
  m_lat_ = meridional * std::numbers::pi / 180.0;
  m_lon_ = prime_vertical * std::cos(phi) * std::numbers::pi / 180.0;
}

Eigen::Vector3d LocalFrame::to_enu(const GroundPoint& g) const {
  return {(g.lon - origin_.lon) * m_lon_, (g.lat - origin_.lat) * m_lat_,
          g.h - origin_.h};
}

GroundPoint LocalFrame::to_ground(const Eigen::Vector3d& enu) const {
  return {origin_.lat + enu[1] / m_lat_, origin_.lon + enu[0] / m_lon_,
          origin_.h + enu[2]};
}

double intersection_angle(const RpcModel& m1, const RpcModel& m2,
                          const GroundPoint& footprint_center) {
  const LocalFrame frame(footprint_center);
  auto ray = [&](const RpcModel& m) {
    const auto& c = m.coefficients();
    const ImagePoint p = project(m, footprint_center);
    const Eigen::Vector3d lo = frame.to_enu(inverse_project(m, p, c.h_off - 0.5 * c.h_scale));
    const Eigen::Vector3d hi = frame.to_enu(inverse_project(m, p, c.h_off + 0.5 * c.h_scale));
    return Eigen::Vector3d((hi - lo).normalized());
  };
  const Eigen::Vector3d r1 = ray(m1);
  const Eigen::Vector3d r2 = ray(m2);
  const double angle = std::atan2(r1.cross(r2).norm(), r1.dot(r2));
  return angle * 180.0 / std::numbers::pi;
}

}  // namespace satstereo
