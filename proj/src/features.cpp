#include "satstereo/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include <Eigen/Dense>

#include "satstereo/errors.hpp"

namespace satstereo {

namespace {

constexpr double kAssumedInputBlur = 0.5;
constexpr int kBorder = 5;
constexpr int kMaxRefineSteps = 5;
constexpr int kOrientationBins = 36;
constexpr int kDescWidth = 4;
constexpr int kDescBins = 8;
constexpr double kDescMagnitudeClamp = 0.2;

std::vector<float> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = static_cast<float>(v);
    sum += v;
  }
  for (auto& v : k) v = static_cast<float>(v / sum);
  return k;
}

GrayImage downsample(const GrayImage& img) {
  const int w = img.width() / 2;
  const int h = img.height() / 2;
  GrayImage out(w, h, 0.0f, img.max_value());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(x, y) = img.at(2 * x, 2 * y);
  return out;
}

GrayImage subtract(const GrayImage& a, const GrayImage& b) {
  GrayImage out(a.width(), a.height(), 0.0f, a.max_value());
  auto o = out.pixels();
  auto pa = a.pixels();
  auto pb = b.pixels();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = pa[i] - pb[i];
  return out;
}

struct Octave {
  std::vector<GrayImage> gauss;
  std::vector<GrayImage> dog;
};

bool is_extremum(const std::vector<GrayImage>& dog, int s, int x, int y) {
  const float v = dog[static_cast<std::size_t>(s)].at(x, y);
  const bool is_max = v > 0.0f;
  for (int ds = -1; ds <= 1; ++ds) {
    const GrayImage& img = dog[static_cast<std::size_t>(s + ds)];
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (ds == 0 && dx == 0 && dy == 0) continue;
        const float n = img.at(x + dx, y + dy);
        if (is_max ? n >= v : n <= v) return false;
      }
    }
  }
  return true;
}

struct Refined {
  double x, y, s;
  double value;
  int ix, iy, is;
};

// Fits a 3D quadratic around the discrete extremum and iterates until the
// offset stays inside the sample cell.
std::optional<Refined> refine(const std::vector<GrayImage>& dog, int s, int x, int y,
                              int scales, double contrast, double edge_ratio) {
  const int w = dog[0].width();
  const int h = dog[0].height();
  Eigen::Vector3d offset;
  Eigen::Vector3d grad;
  for (int step = 0; step < kMaxRefineSteps; ++step) {
    const auto& prev = dog[static_cast<std::size_t>(s - 1)];
    const auto& cur = dog[static_cast<std::size_t>(s)];
    const auto& next = dog[static_cast<std::size_t>(s + 1)];
    const double v = cur.at(x, y);
    grad = {0.5 * (cur.at(x + 1, y) - cur.at(x - 1, y)),
            0.5 * (cur.at(x, y + 1) - cur.at(x, y - 1)),
            0.5 * (next.at(x, y) - prev.at(x, y))};
    const double dxx = cur.at(x + 1, y) + cur.at(x - 1, y) - 2 * v;
    const double dyy = cur.at(x, y + 1) + cur.at(x, y - 1) - 2 * v;
    const double dss = next.at(x, y) + prev.at(x, y) - 2 * v;
    const double dxy = 0.25 * (cur.at(x + 1, y + 1) - cur.at(x - 1, y + 1) -
                               cur.at(x + 1, y - 1) + cur.at(x - 1, y - 1));
    const double dxs = 0.25 * (next.at(x + 1, y) - next.at(x - 1, y) -
                               prev.at(x + 1, y) + prev.at(x - 1, y));
    const double dys = 0.25 * (next.at(x, y + 1) - next.at(x, y - 1) -
                               prev.at(x, y + 1) + prev.at(x, y - 1));
    Eigen::Matrix3d hess;
    hess << dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss;
    const auto lu = hess.fullPivLu();
    if (!lu.isInvertible()) return std::nullopt;
    offset = -lu.solve(grad);
    if (offset.cwiseAbs().maxCoeff() < 0.5) {
      const double value = v + 0.5 * grad.dot(offset);
      if (std::abs(value) < contrast) return std::nullopt;
      const double tr = dxx + dyy;
      const double det = dxx * dyy - dxy * dxy;
      if (det <= 0.0 || tr * tr * edge_ratio >= (edge_ratio + 1) * (edge_ratio + 1) * det) {
        return std::nullopt;
      }
      return Refined{x + offset[0], y + offset[1], s + offset[2], value, x, y, s};
    }
    x += static_cast<int>(std::lround(offset[0]));
    y += static_cast<int>(std::lround(offset[1]));
    s += static_cast<int>(std::lround(offset[2]));
    if (s < 1 || s > scales || x < kBorder || x >= w - kBorder || y < kBorder ||
        y >= h - kBorder) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

double dominant_orientation(const GrayImage& g, int x, int y, double sigma) {
  const double weight_sigma = 1.5 * sigma;
  const int radius = static_cast<int>(std::lround(3.0 * weight_sigma));
  std::array<double, kOrientationBins> hist{};
  for (int dy = -radius; dy <= radius; ++dy) {
    const int yy = y + dy;
    if (yy <= 0 || yy >= g.height() - 1) continue;
    for (int dx = -radius; dx <= radius; ++dx) {
      const int xx = x + dx;
      if (xx <= 0 || xx >= g.width() - 1) continue;
      const double gx = g.at(xx + 1, yy) - g.at(xx - 1, yy);
      const double gy = g.at(xx, yy + 1) - g.at(xx, yy - 1);
      const double mag = std::hypot(gx, gy);
      const double wgt = std::exp(-(dx * dx + dy * dy) / (2.0 * weight_sigma * weight_sigma));
      double angle = std::atan2(gy, gx);
      if (angle < 0) angle += 2 * std::numbers::pi;
      int bin = static_cast<int>(std::floor(angle * kOrientationBins / (2 * std::numbers::pi)));
      bin = std::clamp(bin, 0, kOrientationBins - 1);
      hist[static_cast<std::size_t>(bin)] += wgt * mag;
    }
  }
  // Two passes of [1 1 1]/3 smoothing on the circular histogram.
  for (int pass = 0; pass < 2; ++pass) {
    std::array<double, kOrientationBins> sm{};
    for (int i = 0; i < kOrientationBins; ++i) {
      sm[static_cast<std::size_t>(i)] =
          (hist[static_cast<std::size_t>((i + kOrientationBins - 1) % kOrientationBins)] +
           hist[static_cast<std::size_t>(i)] +
           hist[static_cast<std::size_t>((i + 1) % kOrientationBins)]) / 3.0;
    }
    hist = sm;
  }
  const auto peak = static_cast<int>(std::max_element(hist.begin(), hist.end()) - hist.begin());
  const double l = hist[static_cast<std::size_t>((peak + kOrientationBins - 1) % kOrientationBins)];
  const double c = hist[static_cast<std::size_t>(peak)];
  const double r = hist[static_cast<std::size_t>((peak + 1) % kOrientationBins)];
  const double denom = l - 2 * c + r;
  const double frac = denom != 0.0 ? 0.5 * (l - r) / denom : 0.0;
  return (peak + 0.5 + frac) * 2 * std::numbers::pi / kOrientationBins;
}

bool describe(const GrayImage& g, double x, double y, double sigma, double angle,
              Descriptor& out) {
  const double cell = 3.0 * sigma;
  const int radius = static_cast<int>(std::lround(cell * std::sqrt(2.0) * (kDescWidth + 1) * 0.5));
  const double cos_t = std::cos(angle);
  const double sin_t = std::sin(angle);
  std::array<double, kDescWidth * kDescWidth * kDescBins> hist{};
  const int cx = static_cast<int>(std::lround(x));
  const int cy = static_cast<int>(std::lround(y));
  const double weight_sigma = 0.5 * kDescWidth;
  for (int dy = -radius; dy <= radius; ++dy) {
    const int yy = cy + dy;
    if (yy <= 0 || yy >= g.height() - 1) continue;
    for (int dx = -radius; dx <= radius; ++dx) {
      const int xx = cx + dx;
      if (xx <= 0 || xx >= g.width() - 1) continue;
      const double rx = xx - x;
      const double ry = yy - y;
      // Rotate into the keypoint frame, in cell units.
      const double u = (cos_t * rx + sin_t * ry) / cell;
      const double v = (-sin_t * rx + cos_t * ry) / cell;
      const double bu = u + 0.5 * kDescWidth - 0.5;
      const double bv = v + 0.5 * kDescWidth - 0.5;
      if (bu <= -1.0 || bu >= kDescWidth || bv <= -1.0 || bv >= kDescWidth) continue;
      const double gx = g.at(xx + 1, yy) - g.at(xx - 1, yy);
      const double gy = g.at(xx, yy + 1) - g.at(xx, yy - 1);
      const double mag = std::hypot(gx, gy) *
                         std::exp(-(u * u + v * v) / (2.0 * weight_sigma * weight_sigma));
      double theta = std::atan2(gy, gx) - angle;
      while (theta < 0) theta += 2 * std::numbers::pi;
      while (theta >= 2 * std::numbers::pi) theta -= 2 * std::numbers::pi;
      const double bo = theta * kDescBins / (2 * std::numbers::pi);

      const int u0 = static_cast<int>(std::floor(bu));
      const int v0 = static_cast<int>(std::floor(bv));
      const int o0 = static_cast<int>(std::floor(bo));
      const double fu = bu - u0, fv = bv - v0, fo = bo - o0;
      for (int iv = 0; iv < 2; ++iv) {
        const int vb = v0 + iv;
        if (vb < 0 || vb >= kDescWidth) continue;
        const double wv = iv ? fv : 1.0 - fv;
        for (int iu = 0; iu < 2; ++iu) {
          const int ub = u0 + iu;
          if (ub < 0 || ub >= kDescWidth) continue;
          const double wu = iu ? fu : 1.0 - fu;
          for (int io = 0; io < 2; ++io) {
            const int ob = (o0 + io) % kDescBins;
            const double wo = io ? fo : 1.0 - fo;
            hist[static_cast<std::size_t>((vb * kDescWidth + ub) * kDescBins + ob)] +=
                mag * wu * wv * wo;
          }
        }
      }
    }
  }
  auto normalize = [&hist]() {
    double n = 0.0;
    for (double v : hist) n += v * v;
    n = std::sqrt(n);
    if (!(n > 0.0)) return false;
    for (double& v : hist) v /= n;
    return true;
  };
  if (!normalize()) return false;
  for (double& v : hist) v = std::min(v, kDescMagnitudeClamp);
  if (!normalize()) return false;
  for (std::size_t i = 0; i < kDescriptorSize; ++i) out[i] = static_cast<float>(hist[i]);
  return true;
}

}  // namespace

GrayImage gaussian_blur(const GrayImage& image, double sigma) {
  if (sigma <= 0.0) return image;
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const int w = image.width();
  const int h = image.height();
  GrayImage tmp(w, h, 0.0f, image.max_value());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * image.clamped(x + i, y);
      tmp.at(x, y) = acc;
    }
  }
  GrayImage out(w, h, 0.0f, image.max_value());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * tmp.clamped(x, y + i);
      out.at(x, y) = acc;
    }
  }
  return out;
}

std::vector<Keypoint> detect_and_describe(const GrayImage& image, const DetectorConfig& cfg) {
  if (image.width() < 64 || image.height() < 64) {
    throw ValidationError("feature detection needs an image of at least 64x64");
  }
  for (float v : image.pixels()) {
    if (!std::isfinite(v)) throw ValidationError("image contains non-finite intensities");
  }
  const int scales = cfg.scales_per_octave;
  const double k = std::pow(2.0, 1.0 / scales);

  GrayImage base(image.width(), image.height(), 0.0f, 1.0f);
  {
    auto dst = base.pixels();
    auto src = image.pixels();
    const float inv = 1.0f / image.max_value();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] * inv;
  }
  base = gaussian_blur(base, std::sqrt(std::max(cfg.sigma0 * cfg.sigma0 -
                                                    kAssumedInputBlur * kAssumedInputBlur, 0.01)));

  std::vector<Keypoint> keypoints;
  const double prelim = 0.5 * cfg.contrast_threshold;
  for (int o = 0; o < cfg.octaves; ++o) {
    if (base.width() < 2 * kBorder + 3 || base.height() < 2 * kBorder + 3) break;
    Octave oct;
    oct.gauss.push_back(base);
    for (int i = 1; i < scales + 3; ++i) {
      const double prev_sigma = cfg.sigma0 * std::pow(k, i - 1);
      const double total = prev_sigma * k;
      oct.gauss.push_back(gaussian_blur(oct.gauss.back(),
                                        std::sqrt(total * total - prev_sigma * prev_sigma)));
    }
    for (int i = 0; i + 1 < static_cast<int>(oct.gauss.size()); ++i) {
      oct.dog.push_back(subtract(oct.gauss[static_cast<std::size_t>(i + 1)],
                                 oct.gauss[static_cast<std::size_t>(i)]));
    }
    const int w = base.width();
    const int h = base.height();
    const double octave_scale = std::pow(2.0, o);
    for (int s = 1; s <= scales; ++s) {
      const auto& cur = oct.dog[static_cast<std::size_t>(s)];
      for (int y = kBorder; y < h - kBorder; ++y) {
        for (int x = kBorder; x < w - kBorder; ++x) {
          if (std::abs(cur.at(x, y)) <= prelim) continue;
          if (!is_extremum(oct.dog, s, x, y)) continue;
          const auto r = refine(oct.dog, s, x, y, scales, cfg.contrast_threshold, cfg.edge_ratio);
          if (!r) continue;
          const double sigma_oct = cfg.sigma0 * std::pow(2.0, r->s / scales);
          const auto& g = oct.gauss[static_cast<std::size_t>(r->is)];
          Keypoint kp;
          kp.position = {r->x * octave_scale, r->y * octave_scale};
          kp.scale = sigma_oct * octave_scale;
          kp.octave = o;
          kp.response = r->value;
          kp.orientation = dominant_orientation(g, r->ix, r->iy, sigma_oct);
          if (!describe(g, r->x, r->y, sigma_oct, kp.orientation, kp.descriptor)) continue;
          keypoints.push_back(kp);
        }
      }
    }
    base = downsample(oct.gauss[static_cast<std::size_t>(scales)]);
  }

  // Refinement can converge two seeds onto one location; keep the first.
  std::sort(keypoints.begin(), keypoints.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.octave != b.octave) return a.octave < b.octave;
    if (a.position.line != b.position.line) return a.position.line < b.position.line;
    if (a.position.sample != b.position.sample) return a.position.sample < b.position.sample;
    return a.scale < b.scale;
  });
  keypoints.erase(std::unique(keypoints.begin(), keypoints.end(),
                              [](const Keypoint& a, const Keypoint& b) {
                                return a.octave == b.octave && a.position == b.position &&
                                       a.scale == b.scale;
                              }),
                  keypoints.end());
  return keypoints;
}

}  // namespace satstereo
