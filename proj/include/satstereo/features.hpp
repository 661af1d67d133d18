#pragma once

#include <array>
#include <span>
#include <vector>

#include "satstereo/image.hpp"
#include "satstereo/rpc.hpp"

namespace satstereo {

inline constexpr std::size_t kDescriptorSize = 128;
using Descriptor = std::array<float, kDescriptorSize>;

struct Keypoint {
  ImagePoint position;   ///< full-resolution pixel coordinates
  double scale = 1.0;    ///< Gaussian sigma in full-resolution pixels
  double orientation = 0.0;  ///< radians
  Descriptor descriptor{};   ///< unit L2 norm
  int octave = 0;
  double response = 0.0;  ///< interpolated DoG value
};

struct DetectorConfig {
  int octaves = 4;
  int scales_per_octave = 3;
  double sigma0 = 1.6;
  double contrast_threshold = 0.03;  ///< on intensities normalized by max_value
  double edge_ratio = 10.0;
};

/// Difference-of-Gaussians keypoints with 128-d gradient-histogram descriptors.
///
/// Deterministic: identical images give identical keypoint lists, sorted by
/// (octave, line, sample). Throws ValidationError for images under 64x64 or
/// with non-finite pixels.
std::vector<Keypoint> detect_and_describe(const GrayImage& image,
                                          const DetectorConfig& cfg = {});

/// Separable Gaussian blur with clamped borders.
GrayImage gaussian_blur(const GrayImage& image, double sigma);

}  // namespace satstereo
