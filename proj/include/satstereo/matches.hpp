#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "satstereo/features.hpp"
#include "satstereo/rpc.hpp"

namespace satstereo {

struct ImageSize {
  int width = 0;
  int height = 0;

  /// 0-based pixel coordinates; a point is inside when 0 <= x < width, 0 <= y < height.
  bool contains(const ImagePoint& p) const {
    return p.sample >= 0.0 && p.line >= 0.0 && p.sample < width && p.line < height;
  }
};

struct Match {
  ImagePoint p1;
  ImagePoint p2;
  std::optional<double> score;
};

/// Correspondences between two images, tagged with the method that produced them.
struct MatchSet {
  std::string pair_id;
  std::string method;
  ImageSize size_a;
  ImageSize size_b;
  std::vector<Match> matches;

  std::size_t size() const { return matches.size(); }
  bool empty() const { return matches.empty(); }
};

struct RejectedRow {
  std::size_t line = 0;
  std::string reason;
};

struct MatchValidation {
  std::size_t out_of_bounds = 0;
  std::size_t duplicates = 0;
};

/// Drops out-of-bounds points and collapses duplicates at 1e-3 px granularity,
/// keeping the first occurrence.
MatchValidation sanitize(MatchSet& set);

// Descriptor matching ------------------------------------------------------

struct DescriptorMatch {
  std::size_t query = 0;
  std::size_t train = 0;
  double d1 = 0.0;  ///< nearest distance
  double d2 = 0.0;  ///< second-nearest distance
};

struct RatioTestResult {
  std::vector<DescriptorMatch> matches;
  std::size_t dropped_queries = 0;  ///< queries with no second neighbour
};

/// Nearest/second-nearest search from a to b; keeps a query when d1 < ratio * d2.
/// Ties resolve to the lowest train index.
RatioTestResult ratio_test(std::span<const Descriptor> a, std::span<const Descriptor> b,
                           double ratio);

/// Ratio test with optional cross-check. The cross-check keeps (i, j) only
/// when j is i's accepted match a->b and i is j's accepted match b->a, so the
/// surviving set does not depend on the matching direction.
RatioTestResult match_descriptors(std::span<const Descriptor> a,
                                  std::span<const Descriptor> b, double ratio,
                                  bool crosscheck = true);

struct MatchOptions {
  double ratio = 0.95;
  bool crosscheck = true;
};

MatchSet match_keypoints(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b,
                         const MatchOptions& opts, std::string pair_id, ImageSize size_a,
                         ImageSize size_b);

/// Full baseline: detection on both images followed by descriptor matching.
MatchSet baseline_match(const GrayImage& a, const GrayImage& b, const MatchOptions& opts,
                        std::string pair_id, const DetectorConfig& det = {});

// CSV wire format: header `x1,y1,x2,y2[,score]` --------------------------------

struct MatchLoadReport {
  MatchSet set;
  std::vector<RejectedRow> rejected;
  std::size_t duplicates = 0;
};

/// Parses the CSV contract. Malformed rows raise ParseError with the line
/// number; rows outside the image bounds or with scores outside [0, 1] are
/// rejected and reported. An empty file is a valid empty set.
MatchLoadReport parse_matches(const std::string& text, std::string pair_id, std::string method,
                              ImageSize size_a, ImageSize size_b);

MatchLoadReport load_matches(const std::filesystem::path& path, std::string pair_id,
                             std::string method, ImageSize size_a, ImageSize size_b);

std::string format_matches(const MatchSet& set);
void write_matches(const MatchSet& set, const std::filesystem::path& path);

}  // namespace satstereo
