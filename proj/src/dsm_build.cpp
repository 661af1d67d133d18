#include <algorithm>
#include <cmath>

#include "satstereo/dense.hpp"
#include "satstereo/errors.hpp"

namespace satstereo {

MapGrid grid_for_roi(const GroundRect& roi, double cell_size) {
  if (!(cell_size > 0.0)) throw ValidationError("cell size must be positive");
  GroundPoint origin = roi.center();
  origin.h = 0.0;
  MapGrid grid{GridSpec{}, LocalFrame(origin)};
  const Eigen::Vector3d lo = grid.frame.to_enu({roi.lat_min, roi.lon_min, 0.0});
  const Eigen::Vector3d hi = grid.frame.to_enu({roi.lat_max, roi.lon_max, 0.0});
  grid.spec.cell_size = cell_size;
  grid.spec.x_min = std::floor(lo[0] / cell_size) * cell_size;
  grid.spec.y_min = std::floor(lo[1] / cell_size) * cell_size;
  grid.spec.width = std::max(1, static_cast<int>(std::ceil((hi[0] - grid.spec.x_min) / cell_size)));
  grid.spec.height = std::max(1, static_cast<int>(std::ceil((hi[1] - grid.spec.y_min) / cell_size)));
  return grid;
}

DsmGrid grid_points(const std::vector<Eigen::Vector3d>& points_xyz, const GridSpec& spec) {
  std::vector<std::vector<double>> cells(static_cast<std::size_t>(spec.width) *
                                         static_cast<std::size_t>(spec.height));
  for (const auto& p : points_xyz) {
    if (!p.allFinite()) continue;
    const double cx = std::floor((p[0] - spec.x_min) / spec.cell_size);
    const double cy = std::floor((spec.y_max() - p[1]) / spec.cell_size);
    if (cx < 0 || cy < 0 || cx >= spec.width || cy >= spec.height) continue;
    cells[static_cast<std::size_t>(cy) * spec.width + static_cast<std::size_t>(cx)].push_back(p[2]);
  }
  DsmGrid out(spec);
  for (int row = 0; row < spec.height; ++row) {
    for (int col = 0; col < spec.width; ++col) {
      auto& v = cells[static_cast<std::size_t>(row) * spec.width + col];
      if (v.empty()) continue;
      const std::size_t m = v.size() / 2;
      std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
      double med = v[m];
      if (v.size() % 2 == 0) {
        med = 0.5 * (med + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m)));
      }
      out.at(col, row) = med;
    }
  }
  return out;
}

DsmGrid dsm_from_disparity(const DisparityMap& disparity, const RectificationMap& rect,
                           const RpcModel& m1, const RpcModel& m2, const BiasCorrection& bias,
                           const MapGrid& grid, DsmBuildStats* stats) {
  DsmBuildStats local;
  std::vector<Eigen::Vector3d> points;
  points.reserve(disparity.valid_count());
  for (int y = 0; y < disparity.height; ++y) {
    for (int x = 0; x < disparity.width; ++x) {
      const float d = disparity.at(x, y);
      if (std::isnan(d)) continue;
      const ImagePoint x1 = rect.source_1(x, y);
      const ImagePoint x2c = rect.source_2(x - d, y);
      try {
        const GroundPoint start = rect.affine_triangulate(x1, x2c);
        const Triangulation t = triangulate(m1, m2, x1, bias.invert(x2c), start);
        const Eigen::Vector3d enu = grid.frame.to_enu(t.point);
        const double cx = (enu[0] - grid.spec.x_min) / grid.spec.cell_size;
        const double cy = (grid.spec.y_max() - enu[1]) / grid.spec.cell_size;
        if (cx < 0 || cy < 0 || cx >= grid.spec.width || cy >= grid.spec.height) {
          ++local.outside_grid;
        }
        points.push_back(enu);
        ++local.triangulated;
      } catch (const Error&) {
        ++local.failed;
      }
    }
  }
  if (stats) *stats = local;
  return grid_points(points, grid.spec);
}

}  // namespace satstereo
