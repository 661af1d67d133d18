#pragma once

#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

namespace satstereo {

/// Geometry of a north-up raster in map meters. Row 0 is the northern edge.
struct GridSpec {
  double x_min = 0.0;  ///< western edge (ESRI xllcorner)
  double y_min = 0.0;  ///< southern edge (ESRI yllcorner)
  double cell_size = 0.5;
  int width = 0;
  int height = 0;

  double x_max() const { return x_min + cell_size * width; }
  double y_max() const { return y_min + cell_size * height; }
  double center_x(int col) const { return x_min + (col + 0.5) * cell_size; }
  double center_y(int row) const { return y_max() - (row + 0.5) * cell_size; }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Elevation raster in meters; nodata cells hold NaN.
class DsmGrid {
 public:
  DsmGrid() = default;
  explicit DsmGrid(GridSpec spec, double fill = std::numeric_limits<double>::quiet_NaN());

  const GridSpec& spec() const { return spec_; }
  int width() const { return spec_.width; }
  int height() const { return spec_.height; }

  double& at(int col, int row) { return z_[index(col, row)]; }
  double at(int col, int row) const { return z_[index(col, row)]; }
  bool valid(int col, int row) const { return !std::isnan(at(col, row)); }

  std::size_t valid_count() const;

  /// Bilinear elevation at map coordinates through the four surrounding cell
  /// centers; NaN unless all four are valid. Optional gradients in m/m.
  double sample(double x, double y, double* dzdx = nullptr, double* dzdy = nullptr) const;

  const std::vector<double>& values() const { return z_; }

 private:
  std::size_t index(int col, int row) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(spec_.width) +
           static_cast<std::size_t>(col);
  }

  GridSpec spec_;
  std::vector<double> z_;
};

inline constexpr double kAsciiNodata = -9999.0;

/// ESRI ASCII grid (`ncols/nrows/xllcorner/yllcorner/cellsize/NODATA_value`).
/// `xllcenter`/`yllcenter` headers are accepted on read.
DsmGrid parse_ascii_grid(const std::string& text);
std::string format_ascii_grid(const DsmGrid& grid);
DsmGrid read_ascii_grid(const std::filesystem::path& path);
void write_ascii_grid(const DsmGrid& grid, const std::filesystem::path& path);

/// Short stable hash of a JSON value (FNV-1a of its compact dump), hex encoded.
std::string config_hash(const nlohmann::json& config);

/// Writes `<raster>.json` next to a raster with provenance fields.
void write_sidecar(const std::filesystem::path& raster, const nlohmann::json& provenance);

}  // namespace satstereo
