#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace satstereo {

/// Object-space point: geodetic latitude/longitude in degrees, height in meters.
struct GroundPoint {
  double lat = 0.0;
  double lon = 0.0;
  double h = 0.0;
};

/// Image-space point in pixels; sample is x (column), line is y (row).
struct ImagePoint {
  double sample = 0.0;
  double line = 0.0;

  friend bool operator==(const ImagePoint&, const ImagePoint&) = default;
};

/// Ground box for dense reconstruction.
struct GroundRect {
  double lat_min = 0.0, lat_max = 0.0;
  double lon_min = 0.0, lon_max = 0.0;
  double h_min = 0.0, h_max = 0.0;

  GroundPoint center() const {
    return {0.5 * (lat_min + lat_max), 0.5 * (lon_min + lon_max), 0.5 * (h_min + h_max)};
  }
};

using Polyline = std::vector<ImagePoint>;

/// Raw RPC00B coefficient block. Terms follow the RPC00B cubic order:
/// 1 L P H LP LH PH L² P² H² PLH L³ LP² LH² L²P P³ PH² L²H P²H H³
/// with L = normalized longitude, P = normalized latitude, H = normalized height.
struct RpcCoefficients {
  std::array<double, 20> line_num{};
  std::array<double, 20> line_den{};
  std::array<double, 20> samp_num{};
  std::array<double, 20> samp_den{};
  double lat_off = 0.0, lat_scale = 1.0;
  double lon_off = 0.0, lon_scale = 1.0;
  double h_off = 0.0, h_scale = 1.0;
  double line_off = 0.0, line_scale = 1.0;
  double samp_off = 0.0, samp_scale = 1.0;
};

/// Evaluates the 20 RPC00B monomials at a normalized (P, L, H).
std::array<double, 20> rpc_terms(double p, double l, double h);

/// Rational polynomial camera. Immutable once constructed.
///
/// Construction validates the scales and rescales each numerator/denominator
/// pair so the denominator constant term is exactly 1.
class RpcModel {
 public:
  explicit RpcModel(RpcCoefficients coeffs);

  const RpcCoefficients& coefficients() const { return c_; }

  /// Normalized (P, L, H) of a ground point.
  Eigen::Vector3d normalize(const GroundPoint& g) const;
  GroundPoint denormalize(const Eigen::Vector3d& plh) const;

  /// Projection from normalized object coordinates, in pixels.
  ImagePoint project_normalized(const Eigen::Vector3d& plh) const;

  /// True when every normalized coordinate lies in [-1.5, 1.5].
  bool in_domain(const GroundPoint& g) const;

 private:
  RpcCoefficients c_;
};

struct ProjectionResult {
  ImagePoint point;
  bool in_domain = true;  ///< false when the ground point is outside the validity box
};

ImagePoint project(const RpcModel& model, const GroundPoint& g);
ProjectionResult project_checked(const RpcModel& model, const GroundPoint& g);

/// Ground point at height h that projects onto p (Gauss-Newton, numeric Jacobian).
/// Throws NonConvergenceError when 50 iterations do not reach 1e-6 px, or the
/// Jacobian is singular.
GroundPoint inverse_project(const RpcModel& model, const ImagePoint& p, double h);

struct Triangulation {
  GroundPoint point;
  double residual_px = 0.0;  ///< RMS over the four reprojection residual components
};

/// Least-squares intersection of two image observations.
/// Throws DegenerateGeometryError when the normal matrix condition exceeds 1e12.
Triangulation triangulate(const RpcModel& m1, const RpcModel& m2,
                          const ImagePoint& p1, const ImagePoint& p2);

/// Same as triangulate but starting from a caller-provided estimate.
Triangulation triangulate(const RpcModel& m1, const RpcModel& m2,
                          const ImagePoint& p1, const ImagePoint& p2,
                          const GroundPoint& initial);

/// Reprojection RMS of a candidate ground point against both observations.
double reprojection_rms(const RpcModel& m1, const RpcModel& m2,
                        const ImagePoint& p1, const ImagePoint& p2,
                        const GroundPoint& g);

inline constexpr int kDefaultEpipolarSamples = 11;

/// Projects the ray of p (source image) into the destination image by sweeping
/// n heights uniformly over [h_min, h_max]. Vertices are ordered by height.
Polyline epipolar_curve(const RpcModel& src, const RpcModel& dst,
                        const ImagePoint& p, double h_min, double h_max,
                        int n = kDefaultEpipolarSamples);

/// Minimum Euclidean distance from p to any segment of the polyline.
double point_to_curve_distance(const ImagePoint& p, const Polyline& curve);

/// Closest point on a polyline, with the index of the segment it lies on.
struct CurveProjection {
  ImagePoint closest;
  std::size_t segment = 0;
  double distance = 0.0;
};
CurveProjection closest_on_curve(const ImagePoint& p, const Polyline& curve);

/// Angle in degrees between the two viewing rays through footprint_center.
double intersection_angle(const RpcModel& m1, const RpcModel& m2,
                          const GroundPoint& footprint_center);

/// Local east/north/up frame using the equirectangular approximation at its
/// origin, with meters-per-degree from the WGS84 radii of curvature.
class LocalFrame {
 public:
  explicit LocalFrame(const GroundPoint& origin);

  const GroundPoint& origin() const { return origin_; }
  double meters_per_deg_lat() const { return m_lat_; }
  double meters_per_deg_lon() const { return m_lon_; }

  Eigen::Vector3d to_enu(const GroundPoint& g) const;
  GroundPoint to_ground(const Eigen::Vector3d& enu) const;

 private:
  GroundPoint origin_;
  double m_lat_;
  double m_lon_;
};

}  // namespace satstereo
