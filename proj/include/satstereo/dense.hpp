#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "satstereo/dsm.hpp"
#include "satstereo/image.hpp"
#include "satstereo/orientation.hpp"
#include "satstereo/rpc.hpp"

namespace satstereo {

/// Affine map between rectified (u, v) and source (sample, line) pixels.
struct Affine2 {
  Eigen::Matrix2d m = Eigen::Matrix2d::Identity();
  Eigen::Vector2d t = Eigen::Vector2d::Zero();

  ImagePoint operator()(const ImagePoint& p) const {
    const Eigen::Vector2d r = m * Eigen::Vector2d(p.sample, p.line) + t;
    return {r[0], r[1]};
  }
  Affine2 inverse() const;
};

/// Quasi-epipolar resampling of an oriented pair.
///
/// Source coordinates of image 2 are bias-corrected pixels, i.e. the frame in
/// which matches were observed. Conjugate points share the rectified row v;
/// the disparity is d = u_left - u_right.
struct RectificationMap {
  Affine2 to_rect_1, to_rect_2;      ///< source -> rectified
  Affine2 to_source_1, to_source_2;  ///< rectified -> source
  int width = 0, height = 0;
  double u_min = 0.0, v_min = 0.0;   ///< rectified coordinate of pixel (0, 0)
  int d_min = 0, d_max = 0;          ///< disparity search range covering the ROI heights
  int row_block = 64;
  std::vector<double> height_per_disparity;  ///< meters per pixel of disparity, per row block
  LocalFrame frame{GroundPoint{}};
  /// Least-squares affine cameras over the ROI: x_i = A_i [E N U 1]^T.
  Eigen::Matrix<double, 2, 4> camera_1, camera_2;

  ImagePoint source_1(double col, double row) const {
    return to_source_1({col + u_min, row + v_min});
  }
  ImagePoint source_2(double col, double row) const {
    return to_source_2({col + u_min, row + v_min});
  }

  /// Linear triangulation through the affine cameras; a starting point for
  /// the RPC solve.
  GroundPoint affine_triangulate(const ImagePoint& x1, const ImagePoint& x2_corrected) const;
};

struct RectifiedPair {
  RectificationMap map;
  GrayImage left, right;
  std::vector<std::uint8_t> left_valid, right_valid;  ///< source pixel available
};

/// Builds the rectification and resamples both images bilinearly.
/// Throws RectificationError for a near-zero baseline or an ROI that misses an
/// image footprint.
RectifiedPair rectify(const GrayImage& img1, const GrayImage& img2, const RpcModel& m1,
                      const RpcModel& m2, const BiasCorrection& bias, const GroundRect& roi);

/// Geometry-only part of rectify (no resampling).
RectificationMap build_rectification(const RpcModel& m1, const RpcModel& m2,
                                     const BiasCorrection& bias, const GroundRect& roi,
                                     ImageSize size1, ImageSize size2);

// Semi-global matching -------------------------------------------------------

struct SgmConfig {
  int p1 = 10;
  int p2 = 120;
  double lr_tolerance = 1.0;
  int workers = 1;
};

/// Horizontal disparities; NaN marks invalid pixels.
struct DisparityMap {
  int width = 0, height = 0;
  int d_min = 0, d_max = 0;
  std::vector<float> values;

  float at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
  bool valid(int x, int y) const { return !std::isnan(at(x, y)); }
  std::size_t valid_count() const;
};

/// Census 5x5 / Hamming cost, 8-path aggregation, winner-take-all with
/// parabola sub-pixel refinement and a left-right consistency check. Output is
/// bit-identical for any worker count.
DisparityMap sgm(const GrayImage& left, const GrayImage& right, int d_min, int d_max,
                 const SgmConfig& cfg = {});

/// Variant that also invalidates pixels whose source data is missing.
DisparityMap sgm(const RectifiedPair& pair, const SgmConfig& cfg = {});

/// 5x5 census signature (24 bits) of every pixel, borders clamped.
std::vector<std::uint32_t> census_transform(const GrayImage& img);

// DSM gridding ---------------------------------------------------------------

struct DsmBuildStats {
  std::size_t triangulated = 0;
  std::size_t failed = 0;
  std::size_t outside_grid = 0;
};

/// Map frame: map x/y are east/north meters of `frame`.
struct MapGrid {
  GridSpec spec;
  LocalFrame frame{GroundPoint{}};
};

/// Cell grid covering a ground rectangle at the given resolution, in the local
/// frame centered on the rectangle.
MapGrid grid_for_roi(const GroundRect& roi, double cell_size);

/// Triangulates every valid disparity and grids the per-cell median height.
DsmGrid dsm_from_disparity(const DisparityMap& disparity, const RectificationMap& rect,
                           const RpcModel& m1, const RpcModel& m2, const BiasCorrection& bias,
                           const MapGrid& grid, DsmBuildStats* stats = nullptr);

/// Per-cell median of scattered points; NaN where a cell receives nothing.
DsmGrid grid_points(const std::vector<Eigen::Vector3d>& points_xyz, const GridSpec& spec);

}  // namespace satstereo
