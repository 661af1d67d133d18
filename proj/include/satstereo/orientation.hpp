#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "satstereo/matches.hpp"
#include "satstereo/rpc.hpp"

namespace satstereo {

/// First-order (affine) bias correction of the second image:
/// s' = a0 + a1 s + a2 l,  l' = a3 + a4 s + a5 l.
struct BiasCorrection {
  std::array<double, 6> a{0.0, 1.0, 0.0, 0.0, 0.0, 1.0};

  static BiasCorrection identity() { return {}; }
  static BiasCorrection translation(double ds, double dl) {
    return {{ds, 1.0, 0.0, dl, 0.0, 1.0}};
  }

  ImagePoint apply(const ImagePoint& p) const {
    return {a[0] + a[1] * p.sample + a[2] * p.line, a[3] + a[4] * p.sample + a[5] * p.line};
  }
  ImagePoint invert(const ImagePoint& p) const;
  double determinant() const { return a[1] * a[5] - a[2] * a[4]; }
  /// Sanity bound for a near-identity correction: determinant in [0.5, 2].
  bool plausible() const {
    const double d = determinant();
    return d >= 0.5 && d <= 2.0;
  }
};

struct OrientationConfig {
  double max_epipolar_rms = 5.0;  ///< success gate T, pixels
  double ransac_threshold = 2.0;  ///< consensus threshold, pixels
  int ransac_iterations = 2000;
  int min_inliers = 5;
  std::uint64_t seed = 0;
  int epipolar_samples = kDefaultEpipolarSamples;
};

void validate(const OrientationConfig& cfg);

struct Orientation {
  std::string pair_id;
  BiasCorrection bias;
  std::vector<bool> inlier_mask;
  std::vector<double> epipolar_errors;  ///< NaN where geometry failed
  std::size_t inliers = 0;
  std::size_t invalid_matches = 0;
  double inlier_ratio = 0.0;
  double epipolar_rms = 0.0;  ///< over inliers; NaN with no inliers
  bool success = false;
};

/// success <=> inliers >= min_inliers and rms <= T.
bool orientation_gate(std::size_t inliers, double epipolar_rms, const OrientationConfig& cfg);

/// Height sweep used for epipolar curves: [h_off - h_scale, h_off + h_scale]
/// of the first camera.
std::pair<double, double> epipolar_height_range(const RpcModel& m1);

/// Distance in pixels from p2 to the bias-corrected epipolar curve of p1.
double epipolar_error(const RpcModel& m1, const RpcModel& m2, const BiasCorrection& bias,
                      const Match& match, int samples = kDefaultEpipolarSamples);

/// Epipolar curve of one match, computed once and reused under many biases.
struct PreparedMatch {
  Polyline curve;  ///< uncorrected, in image 2
  ImagePoint p2;
  bool valid = false;
};

std::vector<PreparedMatch> prepare_matches(const RpcModel& m1, const RpcModel& m2,
                                           const MatchSet& matches,
                                           int samples = kDefaultEpipolarSamples);

double epipolar_error(const PreparedMatch& m, const BiasCorrection& bias);

/// Scores a fixed bias: per-match errors, inliers under ransac_threshold,
/// rms over inliers and the success gate.
Orientation evaluate_bias(const RpcModel& m1, const RpcModel& m2, const BiasCorrection& bias,
                          const MatchSet& matches, const OrientationConfig& cfg);

/// Seeded RANSAC over 3-match samples followed by a least-squares refit on the
/// best consensus. Throws InsufficientDataError below 3 matches.
Orientation ransac_bias(const RpcModel& m1, const RpcModel& m2, const MatchSet& matches,
                        const OrientationConfig& cfg);

/// Least-squares bias from prepared matches, Gauss-Newton from `start`.
/// Directions the epipolar errors cannot observe stay at `start`.
BiasCorrection fit_bias(const std::vector<PreparedMatch>& matches,
                        const std::vector<std::size_t>& subset, const BiasCorrection& start,
                        ImageSize frame);

nlohmann::json orientation_to_json(const Orientation& o, const OrientationConfig& cfg);
Orientation orientation_from_json(const nlohmann::json& j);

}  // namespace satstereo
