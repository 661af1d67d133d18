#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "satstereo/rpc.hpp"
#include "satstereo/synthetic.hpp"

namespace fixtures {

inline const satstereo::GroundPoint kCenter{35.68, 139.76, 0.0};

/// Affine stereo pair looking east and west, 512 x 512 pixels.
inline satstereo::RpcModel view(double off_nadir, double azimuth, double gsd = 0.5,
                                int size = 1024) {
  return satstereo::synth::make_rpc({off_nadir, azimuth, gsd, size, size}, kCenter,
                                    0.5 * size * gsd, 50.0, 100.0);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("satstereo_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures

namespace fixtures {

/// Smooth texture raster; pixel (x, y) shows texture point (x + dx, y + dy).
inline satstereo::GrayImage textured(int width, int height, std::uint64_t seed, double dx = 0.0,
                                     double dy = 0.0, double pixel_m = 0.5) {
  const satstereo::synth::Texture tex(seed, 1.5);
  satstereo::GrayImage img(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      img.at(x, y) = static_cast<float>(20.0 + 215.0 * tex((x + dx) * pixel_m, (y + dy) * pixel_m));
  return img;
}

}  // namespace fixtures
