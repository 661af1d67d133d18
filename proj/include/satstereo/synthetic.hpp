#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "satstereo/dense.hpp"
#include "satstereo/dsm.hpp"
#include "satstereo/image.hpp"
#include "satstereo/orientation.hpp"
#include "satstereo/rpc.hpp"

namespace satstereo::synth {

/// Parallel-projection view of a scene, expressed as an exactly affine RPC.
struct ViewSpec {
  double off_nadir_deg = 0.0;
  double azimuth_deg = 0.0;  ///< direction from the scene towards the satellite, from north
  double gsd = 0.5;          ///< meters per pixel
  int width = 512;
  int height = 512;
};

struct Hill {
  double east = 0.0, north = 0.0;  ///< local meters
  double height = 0.0;
  double sigma = 10.0;
};

/// Height field over local east/north meters: plane plus Gaussian hills.
struct Terrain {
  double base = 0.0;
  double slope_east = 0.0;   ///< dh/dE
  double slope_north = 0.0;  ///< dh/dN
  std::vector<Hill> hills;

  double height(double east, double north) const;
  double min_height(double half_extent) const;
  double max_height(double half_extent) const;
};

/// RPC for `view` centered at `center` (the scene point that lands on the
/// image center, height included). The model is affine in the local frame
/// at (center.lat, center.lon, 0); `cubic` adds a small smooth distortion to
/// the numerators.
RpcModel make_rpc(const ViewSpec& view, const GroundPoint& center, double half_extent_m,
                  double h_off, double h_scale, double cubic = 0.0);

/// Random RPC with non-trivial denominators, for geometry tests.
RpcModel random_rpc(std::uint64_t seed, const GroundPoint& center = {35.0, 139.0, 50.0});

/// Smooth band-limited texture in [0, 1] over local meters.
class Texture {
 public:
  explicit Texture(std::uint64_t seed, double finest_wavelength_m = 1.0, int octaves = 4);
  double operator()(double east, double north) const;

 private:
  double lattice(long long i, long long j, int octave) const;
  std::uint64_t seed_;
  double wavelength_;
  int octaves_;
};

/// Renders terrain seen through `model`. `bias` maps RPC pixels to the pixels
/// of the rendered image (a simulated orientation error).
GrayImage render(const RpcModel& model, const ViewSpec& view, const Terrain& terrain,
                 const Texture& texture, const GroundPoint& center,
                 const BiasCorrection& bias = {}, int supersample = 2);

/// Truth DSM of the terrain sampled at cell centers of `spec` (local frame of
/// the ROI center).
DsmGrid truth_dsm(const Terrain& terrain, const GridSpec& spec);

/// Ground rectangle of +-half_extent meters around center.
GroundRect roi_around(const GroundPoint& center, double half_extent_m, double h_min,
                      double h_max);

/// Random-dot texture image.
GrayImage random_dots(int width, int height, std::uint64_t seed);

/// Right image of a constant-disparity stereogram: right(x) = left(x + d).
GrayImage shift_left(const GrayImage& left, int disparity, std::uint64_t fill_seed);

struct TwoPlaneScene {
  GrayImage left, right;
  std::vector<float> truth;              ///< true left disparity
  std::vector<std::uint8_t> occluded;    ///< visible in left only
};

/// Background plane at disparity d_back with a foreground block at d_front
/// covering columns [x0, x1) of the left image. The strip just left of the
/// block is occluded in the right image.
TwoPlaneScene two_plane_scene(int width, int height, int d_back, int d_front, int x0, int x1,
                              std::uint64_t seed);

/// Demo tile: rendered views, RPC files, truth DSM and a tile manifest.
struct DatasetSpec {
  std::uint64_t seed = 7;
  int size = 512;
  double gsd = 0.3;
  double cell_size = 0.5;
  double half_extent_m = 60.0;
  double bias_sample = 1.5;  ///< injected translation of the second and later views
  double bias_line = 2.0;
};

/// Writes the tile under `dir`; returns the manifest path.
std::filesystem::path write_dataset(const std::filesystem::path& dir, const DatasetSpec& spec);

}  // namespace satstereo::synth
