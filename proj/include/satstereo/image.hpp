#pragma once

#include <cmath>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

namespace satstereo {

/// Single-channel raster of float intensities, row-major.
///
/// `max_value` is the nominal full-scale intensity (255 for 8-bit inputs,
/// 65535 for 16-bit); detectors use it to normalize contrast thresholds.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, float fill = 0.0f, float max_value = 255.0f);
  GrayImage(int width, int height, std::vector<float> pixels, float max_value = 255.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  float max_value() const { return max_value_; }
  bool empty() const { return pixels_.empty(); }

  float& at(int x, int y) { return pixels_[index(x, y)]; }
  float at(int x, int y) const { return pixels_[index(x, y)]; }

  /// Clamped access; coordinates outside the raster repeat the border.
  float clamped(int x, int y) const;

  /// Bilinear sample; NaN when (x, y) is outside [0, w-1] x [0, h-1].
  float bilinear(double x, double y) const;

  bool contains(double x, double y) const {
    return x >= 0.0 && y >= 0.0 && x <= width_ - 1 && y <= height_ - 1;
  }

  std::span<const float> pixels() const { return pixels_; }
  std::span<float> pixels() { return pixels_; }

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  float max_value_ = 255.0f;
  std::vector<float> pixels_;
};

/// Reads 8/16-bit single-channel PGM (P5/P2) or PNG, chosen by file content.
GrayImage read_image(const std::filesystem::path& path);

/// Writes by extension (`.png` or `.pgm`), quantizing to 8 or 16 bits.
void write_image(const GrayImage& image, const std::filesystem::path& path,
                 int bit_depth = 8);

}  // namespace satstereo
