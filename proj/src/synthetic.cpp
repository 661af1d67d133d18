#include "satstereo/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <Eigen/Dense>
#include <json.hpp>

#include "satstereo/errors.hpp"
#include "satstereo/random.hpp"
#include "satstereo/rpc_io.hpp"

namespace satstereo::synth {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct ViewAxes {
  Eigen::Vector3d u, w;  ///< image sample axis and "up the image" axis in ENU
};

ViewAxes view_axes(const ViewSpec& v) {
  const double th = v.off_nadir_deg * kDeg;
  const double az = v.azimuth_deg * kDeg;
  const Eigen::Vector3d d(std::sin(th) * std::sin(az), std::sin(th) * std::cos(az),
                          std::cos(th));
  const Eigen::Vector3d east(1, 0, 0), north(0, 1, 0);
  Eigen::Vector3d u = (east - east.dot(d) * d).normalized();
  Eigen::Vector3d w = (north - north.dot(d) * d - north.dot(u) * u).normalized();
  return {u, w};
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

}  // namespace

double Terrain::height(double east, double north) const {
  double h = base + slope_east * east + slope_north * north;
  for (const auto& hill : hills) {
    const double de = east - hill.east, dn = north - hill.north;
    h += hill.height * std::exp(-(de * de + dn * dn) / (2.0 * hill.sigma * hill.sigma));
  }
  return h;
}

double Terrain::min_height(double half_extent) const {
  double lo = std::numeric_limits<double>::infinity();
  for (int i = -20; i <= 20; ++i)
    for (int j = -20; j <= 20; ++j)
      lo = std::min(lo, height(half_extent * i / 20.0, half_extent * j / 20.0));
  return lo;
}

double Terrain::max_height(double half_extent) const {
  double hi = -std::numeric_limits<double>::infinity();
  for (int i = -20; i <= 20; ++i)
    for (int j = -20; j <= 20; ++j)
      hi = std::max(hi, height(half_extent * i / 20.0, half_extent * j / 20.0));
  return hi;
}

RpcModel make_rpc(const ViewSpec& view, const GroundPoint& center, double half_extent_m,
                  double h_off, double h_scale, double cubic) {
  const LocalFrame frame({center.lat, center.lon, 0.0});
  const ViewAxes ax = view_axes(view);
  RpcCoefficients c;
  c.lat_off = center.lat;
  c.lon_off = center.lon;
  c.lat_scale = half_extent_m / frame.meters_per_deg_lat();
  c.lon_scale = half_extent_m / frame.meters_per_deg_lon();
  c.h_off = h_off;
  c.h_scale = h_scale;
  c.samp_off = 0.5 * (view.width - 1);
  c.line_off = 0.5 * (view.height - 1);
  c.samp_scale = 0.5 * view.width;
  c.line_scale = 0.5 * view.height;

  const double ks = 1.0 / (view.gsd * c.samp_scale);
  const double kl = -1.0 / (view.gsd * c.line_scale);
  c.samp_num[0] = ax.u[2] * (h_off - center.h) * ks;
  c.samp_num[1] = ax.u[0] * half_extent_m * ks;
  c.samp_num[2] = ax.u[1] * half_extent_m * ks;
  c.samp_num[3] = ax.u[2] * h_scale * ks;
  c.line_num[0] = ax.w[2] * (h_off - center.h) * kl;
  c.line_num[1] = ax.w[0] * half_extent_m * kl;
  c.line_num[2] = ax.w[1] * half_extent_m * kl;
  c.line_num[3] = ax.w[2] * h_scale * kl;
  c.samp_den[0] = 1.0;
  c.line_den[0] = 1.0;
  c.samp_num[11] += cubic;
  c.line_num[15] += cubic;
  return RpcModel(c);
}

RpcModel random_rpc(std::uint64_t seed, const GroundPoint& center) {
  Rng rng(seed);
  ViewSpec view;
  view.off_nadir_deg = rng.uniform(2.0, 25.0);
  view.azimuth_deg = rng.uniform(0.0, 360.0);
  view.gsd = rng.uniform(0.3, 0.6);
  view.width = 2048;
  view.height = 2048;
  RpcCoefficients c =
      make_rpc(view, center, 0.4 * view.width * view.gsd, center.h, 200.0).coefficients();
  for (int k = 4; k < 20; ++k) {
    c.samp_num[k] += rng.uniform(-2e-3, 2e-3);
    c.line_num[k] += rng.uniform(-2e-3, 2e-3);
  }
  for (int k = 1; k < 4; ++k) {
    c.samp_den[k] = rng.uniform(-1e-3, 1e-3);
    c.line_den[k] = rng.uniform(-1e-3, 1e-3);
  }
  return RpcModel(c);
}

Texture::Texture(std::uint64_t seed, double finest_wavelength_m, int octaves)
    : seed_(seed), wavelength_(finest_wavelength_m), octaves_(octaves) {
  if (!(finest_wavelength_m > 0.0) || octaves < 1) {
    throw ValidationError("texture needs a positive wavelength and at least one octave");
  }
}

double Texture::lattice(long long i, long long j, int octave) const {
  std::uint64_t h = mix(seed_ ^ mix(static_cast<std::uint64_t>(octave)));
  h = mix(h ^ static_cast<std::uint64_t>(i));
  h = mix(h ^ static_cast<std::uint64_t>(j));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double Texture::operator()(double east, double north) const {
  double sum = 0.0, norm = 0.0, amp = 1.0, lambda = wavelength_;
  for (int o = 0; o < octaves_; ++o) {
    const double x = east / lambda, y = north / lambda;
    const double fx = std::floor(x), fy = std::floor(y);
    const auto i = static_cast<long long>(fx);
    const auto j = static_cast<long long>(fy);
    const double tx = smooth(x - fx), ty = smooth(y - fy);
    const double v0 = lattice(i, j, o) * (1 - tx) + lattice(i + 1, j, o) * tx;
    const double v1 = lattice(i, j + 1, o) * (1 - tx) + lattice(i + 1, j + 1, o) * tx;
    sum += amp * (v0 * (1 - ty) + v1 * ty);
    norm += amp;
    amp *= 0.7;
    lambda *= 2.0;
  }
  return sum / norm;
}

GrayImage render(const RpcModel& model, const ViewSpec& view, const Terrain& terrain,
                 const Texture& texture, const GroundPoint& center, const BiasCorrection& bias,
                 int supersample) {
  if (supersample < 1) throw ValidationError("supersample must be at least 1");
  const LocalFrame frame({center.lat, center.lon, 0.0});
  auto pixel_of = [&](const Eigen::Vector3d& enu) {
    const ImagePoint p = project(model, frame.to_ground(enu));
    return Eigen::Vector2d(p.sample, p.line);
  };
  // Linear part of the camera around the scene center.
  const double step = 1.0;
  const Eigen::Vector2d p0 = pixel_of({0, 0, 0});
  Eigen::Matrix<double, 2, 3> a;
  a.col(0) = pixel_of({step, 0, 0}) - p0;
  a.col(1) = pixel_of({0, step, 0}) - p0;
  a.col(2) = pixel_of({0, 0, step}) - p0;

  GrayImage img(view.width, view.height, 0.0f, 255.0f);
  const double inv = 1.0 / supersample;
  for (int y = 0; y < view.height; ++y) {
    for (int x = 0; x < view.width; ++x) {
      double acc = 0.0;
      for (int sy = 0; sy < supersample; ++sy) {
        for (int sx = 0; sx < supersample; ++sx) {
          const ImagePoint obs{x + (sx + 0.5) * inv - 0.5, y + (sy + 0.5) * inv - 0.5};
          const ImagePoint q = bias.invert(obs);
          const Eigen::Vector2d target(q.sample, q.line);
          Eigen::Vector2d en = a.leftCols<2>().lu().solve(target - p0 - a.col(2) * terrain.base);
          for (int it = 0; it < 30; ++it) {
            const double h = terrain.height(en[0], en[1]);
            const Eigen::Vector2d r = pixel_of({en[0], en[1], h}) - target;
            if (r.norm() < 1e-7) break;
            const double eps = 0.01;
            const double gx = (terrain.height(en[0] + eps, en[1]) - h) / eps;
            const double gy = (terrain.height(en[0], en[1] + eps) - h) / eps;
            Eigen::Matrix2d j = a.leftCols<2>();
            j.col(0) += a.col(2) * gx;
            j.col(1) += a.col(2) * gy;
            en -= j.lu().solve(r);
          }
          acc += texture(en[0], en[1]);
        }
      }
      img.at(x, y) = static_cast<float>(20.0 + 215.0 * acc * inv * inv);
    }
  }
  return img;
}

DsmGrid truth_dsm(const Terrain& terrain, const GridSpec& spec) {
  DsmGrid out(spec);
  for (int row = 0; row < spec.height; ++row)
    for (int col = 0; col < spec.width; ++col)
      out.at(col, row) = terrain.height(spec.center_x(col), spec.center_y(row));
  return out;
}

GroundRect roi_around(const GroundPoint& center, double half_extent_m, double h_min,
                      double h_max) {
  const LocalFrame frame({center.lat, center.lon, 0.0});
  const double dlat = half_extent_m / frame.meters_per_deg_lat();
  const double dlon = half_extent_m / frame.meters_per_deg_lon();
  return {center.lat - dlat, center.lat + dlat, center.lon - dlon, center.lon + dlon, h_min,
          h_max};
}

GrayImage random_dots(int width, int height, std::uint64_t seed) {
  Rng rng(seed);
  GrayImage img(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) img.at(x, y) = static_cast<float>(rng.index(256));
  return img;
}

GrayImage shift_left(const GrayImage& left, int disparity, std::uint64_t fill_seed) {
  const GrayImage fill = random_dots(left.width(), left.height(), fill_seed);
  GrayImage right(left.width(), left.height());
  for (int y = 0; y < left.height(); ++y) {
    for (int x = 0; x < left.width(); ++x) {
      const int xs = x + disparity;
      right.at(x, y) = (xs >= 0 && xs < left.width()) ? left.at(xs, y) : fill.at(x, y);
    }
  }
  return right;
}

TwoPlaneScene two_plane_scene(int width, int height, int d_back, int d_front, int x0, int x1,
                              std::uint64_t seed) {
  const int margin = std::max(std::abs(d_back), std::abs(d_front));
  const GrayImage back = random_dots(width + 2 * margin, height, derive_seed(seed, "back"));
  const GrayImage front = random_dots(width + 2 * margin, height, derive_seed(seed, "front"));
  auto tex = [&](const GrayImage& t, int x, int y) { return t.at(x + margin, y); };
  TwoPlaneScene s;
  s.left = GrayImage(width, height);
  s.right = GrayImage(width, height);
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  s.truth.assign(n, 0.0f);
  s.occluded.assign(n, 0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      const bool in_front = x >= x0 && x < x1;
      s.left.at(x, y) = in_front ? tex(front, x, y) : tex(back, x, y);
      s.truth[i] = static_cast<float>(in_front ? d_front : d_back);
      const int covered = x - d_back + d_front;
      s.occluded[i] = !in_front && covered >= x0 && covered < x1;
      const int xf = x + d_front;
      s.right.at(x, y) = (xf >= x0 && xf < x1) ? tex(front, xf, y) : tex(back, x + d_back, y);
    }
  }
  return s;
}

std::filesystem::path write_dataset(const std::filesystem::path& dir, const DatasetSpec& spec) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const GroundPoint center{35.68, 139.76, 0.0};
  Terrain terrain;
  terrain.base = 20.0;
  terrain.slope_east = 0.15;
  terrain.slope_north = -0.05;
  terrain.hills = {{15.0, -10.0, 6.0, 12.0}, {-20.0, 20.0, 4.0, 8.0}};
  const double h_lo = std::floor(terrain.min_height(spec.half_extent_m)) - 2.0;
  const double h_hi = std::ceil(terrain.max_height(spec.half_extent_m)) + 2.0;

  struct View {
    const char* id;
    double off_nadir, azimuth;
    BiasCorrection bias;
    const char* date;
    double sun_az, sun_el;
  };
  const View views[] = {
      {"view_a", 15.0, 90.0, BiasCorrection::identity(), "2016-01-12", 160.0, 35.0},
      {"view_b", 15.0, 270.0, BiasCorrection::translation(spec.bias_sample, spec.bias_line),
       "2016-03-02", 150.0, 50.0},
      {"view_c", 12.0, 0.0, BiasCorrection::translation(-spec.bias_line, spec.bias_sample),
       "2015-11-20", 165.0, 32.0},
  };
  const Texture texture(derive_seed(spec.seed, "texture"), 1.0, 4);
  nlohmann::json images = nlohmann::json::array();
  for (const auto& v : views) {
    ViewSpec vs{v.off_nadir, v.azimuth, spec.gsd, spec.size, spec.size};
    const RpcModel rpc = make_rpc(vs, center, spec.half_extent_m, 0.5 * (h_lo + h_hi), 100.0);
    const GrayImage img = render(rpc, vs, terrain, texture, center, v.bias);
    const std::string rpc_name = std::string(v.id) + "_rpc.json";
    const std::string img_name = std::string(v.id) + ".png";
    save_rpc(rpc, dir / rpc_name);
    write_image(img, dir / img_name);
    images.push_back({{"image_id", v.id},
                      {"date", v.date},
                      {"sun_azimuth", v.sun_az},
                      {"sun_elevation", v.sun_el},
                      {"gsd", spec.gsd},
                      {"rpc_path", rpc_name},
                      {"image_path", img_name}});
  }
  const GroundRect roi = roi_around(center, spec.half_extent_m, h_lo, h_hi);
  const MapGrid grid = grid_for_roi(roi, spec.cell_size);
  write_ascii_grid(truth_dsm(terrain, grid.spec), dir / "truth_dsm.asc");

  nlohmann::json manifest = {
      {"tile_id", "synthetic"},
      {"images", images},
      {"truth_dsm", "truth_dsm.asc"},
      {"roi",
       {{"lat_min", roi.lat_min}, {"lat_max", roi.lat_max}, {"lon_min", roi.lon_min},
        {"lon_max", roi.lon_max}, {"h_min", roi.h_min}, {"h_max", roi.h_max}}}};
  const fs::path path = dir / "tile.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << manifest.dump(2) << "\n";
  return path;
}

}  // namespace satstereo::synth
