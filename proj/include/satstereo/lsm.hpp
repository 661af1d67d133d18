#pragma once

#include "satstereo/image.hpp"
#include "satstereo/matches.hpp"

namespace satstereo {

struct LsmConfig {
  int window = 21;               ///< odd template size in pixels
  int max_iterations = 30;
  double convergence_px = 0.01;  ///< stop when the translation update is below this
  double max_shift_px = 5.0;     ///< larger updates or drift count as divergence
  double min_template_std = 1.0; ///< intensity levels
};

enum class LsmStatus { Converged, Diverged, MaxIterations, Textureless, OutOfBounds };

const char* to_string(LsmStatus s);

struct LsmResult {
  ImagePoint p2;  ///< refined, or the seed when not converged
  bool converged = false;
  int iterations = 0;
  LsmStatus status = LsmStatus::MaxIterations;
};

/// Least-squares matching of the template around p1 into img2, seeded at p2.
/// Estimates an affine geometric warp plus gain/offset radiometry by
/// Gauss-Newton with bilinear resampling; p1 stays fixed.
LsmResult lsm_refine(const GrayImage& img1, const GrayImage& img2, const ImagePoint& p1,
                     const ImagePoint& p2, const LsmConfig& cfg = {});

struct RefineCounts {
  std::size_t refined = 0;   ///< converged, coordinates updated
  std::size_t kept = 0;      ///< not converged, original coordinates retained
  std::size_t rejected = 0;  ///< textureless or window outside an image; retained as-is
};

struct RefinedMatches {
  MatchSet matches;
  RefineCounts counts;
};

RefinedMatches refine_matchset(const GrayImage& img1, const GrayImage& img2,
                               const MatchSet& matches, const LsmConfig& cfg = {});

}  // namespace satstereo
