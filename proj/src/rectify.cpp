#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "satstereo/dense.hpp"
#include "satstereo/errors.hpp"

namespace satstereo {

namespace {

constexpr int kControlSteps = 7;
constexpr int kHeightLayers = 3;
constexpr double kMinBaseline = 1e-6;
constexpr int kDisparityMargin = 3;

std::vector<GroundPoint> roi_corners(const GroundRect& roi) {
  std::vector<GroundPoint> out;
  for (double lat : {roi.lat_min, roi.lat_max})
    for (double lon : {roi.lon_min, roi.lon_max})
      for (double h : {roi.h_min, roi.h_max}) out.push_back({lat, lon, h});
  return out;
}

void require_overlap(const std::vector<ImagePoint>& pts, ImageSize size, const char* which) {
  double smin = std::numeric_limits<double>::infinity(), smax = -smin;
  double lmin = smin, lmax = -smin;
  for (const auto& p : pts) {
    smin = std::min(smin, p.sample);
    smax = std::max(smax, p.sample);
    lmin = std::min(lmin, p.line);
    lmax = std::max(lmax, p.line);
  }
  if (smax < 0.0 || lmax < 0.0 || smin > size.width - 1 || lmin > size.height - 1) {
    throw RectificationError(std::string("ROI does not overlap the footprint of ") + which);
  }
}

}  // namespace

Affine2 Affine2::inverse() const {
  const double det = m.determinant();
  if (std::abs(det) < 1e-15) throw RectificationError("rectifying transform is singular");
  Affine2 inv;
  inv.m = m.inverse();
  inv.t = -inv.m * t;
  return inv;
}

GroundPoint RectificationMap::affine_triangulate(const ImagePoint& x1,
                                                 const ImagePoint& x2_corrected) const {
  Eigen::Matrix<double, 4, 3> a;
  a.topRows<2>() = camera_1.leftCols<3>();
  a.bottomRows<2>() = camera_2.leftCols<3>();
  Eigen::Vector4d b(x1.sample - camera_1(0, 3), x1.line - camera_1(1, 3),
                    x2_corrected.sample - camera_2(0, 3), x2_corrected.line - camera_2(1, 3));
  const Eigen::Vector3d enu = a.colPivHouseholderQr().solve(b);
  return frame.to_ground(enu);
}

RectificationMap build_rectification(const RpcModel& m1, const RpcModel& m2,
                                     const BiasCorrection& bias, const GroundRect& roi,
                                     ImageSize size1, ImageSize size2) {
  if (!(roi.lat_min < roi.lat_max && roi.lon_min < roi.lon_max && roi.h_min <= roi.h_max)) {
    throw ValidationError("ROI bounds are inverted");
  }
  RectificationMap map;
  GroundPoint origin = roi.center();
  origin.h = 0.0;
  map.frame = LocalFrame(origin);

  // Footprint overlap before any fitting.
  std::vector<ImagePoint> c1, c2;
  for (const auto& g : roi_corners(roi)) {
    c1.push_back(project(m1, g));
    c2.push_back(bias.apply(project(m2, g)));
  }
  require_overlap(c1, size1, "image 1");
  require_overlap(c2, size2, "image 2");

  // Control grid over the ROI volume.
  const double h_lo = roi.h_min;
  const double h_hi = roi.h_max > roi.h_min ? roi.h_max : roi.h_min + 1.0;
  const int n = kControlSteps * kControlSteps * kHeightLayers;
  Eigen::MatrixXd phi(n, 4);
  Eigen::MatrixXd x1(n, 2), x2(n, 2);
  {
    int r = 0;
    for (int k = 0; k < kHeightLayers; ++k) {
      const double h = h_lo + (h_hi - h_lo) * k / (kHeightLayers - 1);
      for (int i = 0; i < kControlSteps; ++i) {
        const double lat = roi.lat_min + (roi.lat_max - roi.lat_min) * i / (kControlSteps - 1);
        for (int j = 0; j < kControlSteps; ++j, ++r) {
          const double lon = roi.lon_min + (roi.lon_max - roi.lon_min) * j / (kControlSteps - 1);
          const GroundPoint g{lat, lon, h};
          const Eigen::Vector3d enu = map.frame.to_enu(g);
          phi.row(r) << enu[0], enu[1], enu[2], 1.0;
          const ImagePoint p1 = project(m1, g);
          const ImagePoint p2 = bias.apply(project(m2, g));
          x1.row(r) << p1.sample, p1.line;
          x2.row(r) << p2.sample, p2.line;
        }
      }
    }
  }
  const auto qr = phi.colPivHouseholderQr();
  map.camera_1 = qr.solve(x1).transpose();
  map.camera_2 = qr.solve(x2).transpose();

  Eigen::Matrix<double, 4, 3> p;
  p.topRows<2>() = map.camera_1.leftCols<3>();
  p.bottomRows<2>() = map.camera_2.leftCols<3>();
  Eigen::JacobiSVD<Eigen::Matrix<double, 4, 3>> svd(p, Eigen::ComputeFullU);
  const auto& sv = svd.singularValues();
  if (!(sv[2] > kMinBaseline * sv[0])) {
    throw RectificationError("stereo baseline is numerically zero");
  }
  Eigen::Vector4d w = svd.matrixU().col(3);
  Eigen::Vector2d c1v = w.head<2>();
  Eigen::Vector2d c2v = w.tail<2>();
  if (c1v[1] < 0.0 || (c1v[1] == 0.0 && c1v[0] < 0.0)) {
    c1v = -c1v;
    c2v = -c2v;
  }
  const double n1 = c1v.norm();
  if (n1 < 1e-9) throw RectificationError("epipolar direction undefined in image 1");
  const double k = c1v.dot(map.camera_1.col(3)) + c2v.dot(map.camera_2.col(3));
  const Eigen::Vector2d vhat = c1v / n1;

  map.to_rect_1.m << vhat[1], -vhat[0], vhat[0], vhat[1];
  map.to_rect_1.t.setZero();

  // Right u axis: least-squares agreement with the left u on the mid-height layer,
  // so disparity is near zero there.
  const int layer = kControlSteps * kControlSteps;
  const int mid = (kHeightLayers / 2) * layer;
  Eigen::MatrixXd design(layer, 3);
  Eigen::VectorXd target(layer);
  for (int r = 0; r < layer; ++r) {
    design.row(r) << x2(mid + r, 0), x2(mid + r, 1), 1.0;
    target[r] = map.to_rect_1.m.row(0).dot(x1.row(mid + r).transpose());
  }
  const Eigen::Vector3d e = design.colPivHouseholderQr().solve(target);
  map.to_rect_2.m << e[0], e[1], -c2v[0] / n1, -c2v[1] / n1;
  map.to_rect_2.t << e[2], k / n1;
  if (std::abs(map.to_rect_2.m.determinant()) < 1e-9 * map.to_rect_2.m.squaredNorm()) {
    throw RectificationError("right rectifying transform is singular");
  }
  map.to_source_1 = map.to_rect_1.inverse();
  map.to_source_2 = map.to_rect_2.inverse();

  // Extent and disparity range from the ROI corners.
  double umin = std::numeric_limits<double>::infinity(), umax = -umin;
  double vmin = umin, vmax = -umin;
  double dmin = umin, dmax = -umin;
  for (std::size_t i = 0; i < c1.size(); ++i) {
    const ImagePoint r1 = map.to_rect_1(c1[i]);
    const ImagePoint r2 = map.to_rect_2(c2[i]);
    umin = std::min(umin, r1.sample);
    umax = std::max(umax, r1.sample);
    vmin = std::min(vmin, r1.line);
    vmax = std::max(vmax, r1.line);
    const double d = r1.sample - r2.sample;
    dmin = std::min(dmin, d);
    dmax = std::max(dmax, d);
  }
  map.u_min = std::floor(umin);
  map.v_min = std::floor(vmin);
  map.width = static_cast<int>(std::ceil(umax) - map.u_min) + 1;
  map.height = static_cast<int>(std::ceil(vmax) - map.v_min) + 1;
  map.d_min = static_cast<int>(std::floor(dmin)) - kDisparityMargin;
  map.d_max = static_cast<int>(std::ceil(dmax)) + kDisparityMargin;

  // Height change per unit disparity at the center of each row block.
  const int blocks = (map.height + map.row_block - 1) / map.row_block;
  const double col = 0.5 * map.width;
  for (int b = 0; b < blocks; ++b) {
    const double row = std::min(b * map.row_block + 0.5 * map.row_block, map.height - 1.0);
    const ImagePoint s1 = map.source_1(col, row);
    const GroundPoint g0 = map.affine_triangulate(s1, map.source_2(col, row));
    const GroundPoint g1 = map.affine_triangulate(s1, map.source_2(col - 1.0, row));
    double dh = g1.h - g0.h;
    try {
      const auto t0 = triangulate(m1, m2, s1, bias.invert(map.source_2(col, row)), g0);
      const auto t1 = triangulate(m1, m2, s1, bias.invert(map.source_2(col - 1.0, row)), g1);
      dh = t1.point.h - t0.point.h;
    } catch (const Error&) {
      // keep the affine estimate
    }
    map.height_per_disparity.push_back(dh);
  }
  return map;
}

RectifiedPair rectify(const GrayImage& img1, const GrayImage& img2, const RpcModel& m1,
                      const RpcModel& m2, const BiasCorrection& bias, const GroundRect& roi) {
  RectifiedPair out;
  out.map = build_rectification(m1, m2, bias, roi, {img1.width(), img1.height()},
                                {img2.width(), img2.height()});
  const int w = out.map.width;
  const int h = out.map.height;
  out.left = GrayImage(w, h, 0.0f, img1.max_value());
  out.right = GrayImage(w, h, 0.0f, img2.max_value());
  out.left_valid.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0);
  out.right_valid.assign(out.left_valid.size(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) +
                            static_cast<std::size_t>(x);
      const ImagePoint s1 = out.map.source_1(x, y);
      const float v1 = img1.bilinear(s1.sample, s1.line);
      if (!std::isnan(v1)) {
        out.left.at(x, y) = v1;
        out.left_valid[i] = 1;
      }
      const ImagePoint s2 = out.map.source_2(x, y);
      const float v2 = img2.bilinear(s2.sample, s2.line);
      if (!std::isnan(v2)) {
        out.right.at(x, y) = v2;
        out.right_valid[i] = 1;
      }
    }
  }
  return out;
}

}  // namespace satstereo
