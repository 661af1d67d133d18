#pragma once

#include <cmath>

#include "fixtures.hpp"
#include "satstereo/dense.hpp"
#include "satstereo/synthetic.hpp"

namespace fixtures {

/// Rendered east/west pair over `terrain` with a known bias on image 2.
struct RenderedPair {
  satstereo::RpcModel m1, m2;
  satstereo::GrayImage img1, img2;
  satstereo::BiasCorrection bias;
  satstereo::GroundRect roi;
  satstereo::MapGrid grid;
  satstereo::synth::Terrain terrain;
};

inline RenderedPair rendered_pair(const satstereo::synth::Terrain& terrain, int size = 256,
                                  double gsd = 0.4, double half_extent = 40.0,
                                  const satstereo::BiasCorrection& bias =
                                      satstereo::BiasCorrection::translation(1.5, 2.0),
                                  std::uint64_t seed = 7) {
  using namespace satstereo;
  const double lo = std::floor(terrain.min_height(half_extent)) - 2.0;
  const double hi = std::ceil(terrain.max_height(half_extent)) + 2.0;
  const synth::ViewSpec v1{15.0, 90.0, gsd, size, size}, v2{15.0, 270.0, gsd, size, size};
  const GroundPoint mid{kCenter.lat, kCenter.lon, 0.5 * (lo + hi)};
  const RpcModel m1 = synth::make_rpc(v1, mid, half_extent, mid.h, 100.0);
  const RpcModel m2 = synth::make_rpc(v2, mid, half_extent, mid.h, 100.0);
  const synth::Texture tex(seed, 1.0, 4);
  const GroundRect roi = synth::roi_around(kCenter, half_extent, lo, hi);
  RenderedPair p{m1,
                 m2,
                 synth::render(m1, v1, terrain, tex, kCenter),
                 synth::render(m2, v2, terrain, tex, kCenter, bias),
                 bias,
                 roi,
                 grid_for_roi(roi, 0.5),
                 terrain};
  return p;
}

/// Rectify, match densely and grid, with the true bias as orientation.
inline satstereo::DsmGrid reconstruct(const RenderedPair& p,
                                      satstereo::DsmBuildStats* stats = nullptr) {
  using namespace satstereo;
  const RectifiedPair rect = rectify(p.img1, p.img2, p.m1, p.m2, p.bias, p.roi);
  const DisparityMap disp = sgm(rect);
  return dsm_from_disparity(disp, rect.map, p.m1, p.m2, p.bias, p.grid, stats);
}

}  // namespace fixtures
