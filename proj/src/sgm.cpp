#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <thread>

#include "satstereo/dense.hpp"
#include "satstereo/errors.hpp"

namespace satstereo {

namespace {

constexpr std::uint8_t kMissingCost = 24;

struct Volume {
  int w = 0, h = 0, nd = 0;
  std::size_t index(int x, int y, int d) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(w) +
            static_cast<std::size_t>(x)) * static_cast<std::size_t>(nd) +
           static_cast<std::size_t>(d);
  }
  std::size_t size() const {
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(nd);
  }
};

template <typename Fn>
void parallel_for(int n, int workers, Fn fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i, 0);
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) fn(i, w);
    });
  }
  for (auto& t : pool) t.join();
}

// Accumulates one path direction into `sum`.
void aggregate(const std::vector<std::uint8_t>& cost, const Volume& vol, int dx, int dy,
               int p1, int p2, std::vector<std::uint16_t>& sum) {
  const int w = vol.w, h = vol.h, nd = vol.nd;
  std::vector<std::uint16_t> prev(static_cast<std::size_t>(w) * nd);
  std::vector<std::uint16_t> cur(prev.size());
  std::vector<std::uint16_t> prev_min(static_cast<std::size_t>(w));
  std::vector<std::uint16_t> cur_min(prev_min.size());

  const int y0 = dy >= 0 ? 0 : h - 1;
  const int ystep = dy >= 0 ? 1 : -1;
  const int x0 = dx >= 0 ? 0 : w - 1;
  const int xstep = dx >= 0 ? 1 : -1;

  for (int yi = 0, y = y0; yi < h; ++yi, y += ystep) {
    for (int xi = 0, x = x0; xi < w; ++xi, x += xstep) {
      const int px = x - dx;
      const bool has_pred = px >= 0 && px < w && (dy == 0 || yi > 0);
      std::uint16_t* out = cur.data() + static_cast<std::size_t>(x) * nd;
      const std::uint8_t* c = cost.data() + vol.index(x, y, 0);
      std::uint16_t best = std::numeric_limits<std::uint16_t>::max();
      if (!has_pred) {
        for (int d = 0; d < nd; ++d) {
          out[d] = c[d];
          best = std::min(best, out[d]);
        }
      } else {
        const std::uint16_t* lp = (dy == 0 ? cur.data() : prev.data()) +
                                  static_cast<std::size_t>(px) * nd;
        const int mp = dy == 0 ? cur_min[static_cast<std::size_t>(px)]
                               : prev_min[static_cast<std::size_t>(px)];
        for (int d = 0; d < nd; ++d) {
          int v = std::min<int>(lp[d], mp + p2);
          if (d > 0) v = std::min<int>(v, lp[d - 1] + p1);
          if (d + 1 < nd) v = std::min<int>(v, lp[d + 1] + p1);
          out[d] = static_cast<std::uint16_t>(c[d] + v - mp);
          best = std::min(best, out[d]);
        }
      }
      cur_min[static_cast<std::size_t>(x)] = best;
      std::uint16_t* s = sum.data() + vol.index(x, y, 0);
      for (int d = 0; d < nd; ++d) s[d] = static_cast<std::uint16_t>(s[d] + out[d]);
    }
    std::swap(prev, cur);
    std::swap(prev_min, cur_min);
  }
}

}  // namespace

std::size_t DisparityMap::valid_count() const {
  return static_cast<std::size_t>(
      std::count_if(values.begin(), values.end(), [](float v) { return !std::isnan(v); }));
}

std::vector<std::uint32_t> census_transform(const GrayImage& img) {
  const int w = img.width(), h = img.height();
  std::vector<std::uint32_t> out(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float center = img.at(x, y);
      std::uint32_t sig = 0;
      for (int oy = -2; oy <= 2; ++oy) {
        for (int ox = -2; ox <= 2; ++ox) {
          if (ox == 0 && oy == 0) continue;
          sig = (sig << 1) | (img.clamped(x + ox, y + oy) < center ? 1u : 0u);
        }
      }
      out[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) +
          static_cast<std::size_t>(x)] = sig;
    }
  }
  return out;
}

DisparityMap sgm(const GrayImage& left, const GrayImage& right, int d_min, int d_max,
                 const SgmConfig& cfg) {
  if (left.width() != right.width() || left.height() != right.height()) {
    throw ValidationError("SGM requires images of equal size");
  }
  if (d_max < d_min) throw ValidationError("disparity range is empty");
  if (cfg.p1 < 0 || cfg.p2 < cfg.p1) throw ValidationError("SGM penalties need 0 <= P1 <= P2");
  if (cfg.workers < 1) throw ValidationError("workers must be at least 1");
  if (left.empty()) throw ValidationError("SGM input is empty");

  Volume vol{left.width(), left.height(), d_max - d_min + 1};
  const long long peak = 8LL * (kMissingCost + cfg.p2);
  if (peak > std::numeric_limits<std::uint16_t>::max()) {
    throw ValidationError("P2 too large for 16-bit aggregation");
  }
  const int w = vol.w, h = vol.h, nd = vol.nd;
  const auto cl = census_transform(left);
  const auto cr = census_transform(right);

  std::vector<std::uint8_t> cost(vol.size());
  parallel_for(h, cfg.workers, [&](int y, int) {
    for (int x = 0; x < w; ++x) {
      const std::uint32_t a = cl[static_cast<std::size_t>(y) * w + x];
      for (int di = 0; di < nd; ++di) {
        const int xr = x - (d_min + di);
        cost[vol.index(x, y, di)] =
            (xr < 0 || xr >= w)
                ? kMissingCost
                : static_cast<std::uint8_t>(
                      std::popcount(a ^ cr[static_cast<std::size_t>(y) * w + xr]));
      }
    }
  });

  // Each direction writes its own buffer; summing in a fixed order keeps the
  // result independent of scheduling.
  static constexpr int kDirs[8][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1},
                                      {1, 1}, {-1, 1}, {1, -1}, {-1, -1}};
  const int workers = std::max(1, std::min(cfg.workers, 8));
  std::vector<std::vector<std::uint16_t>> partial(static_cast<std::size_t>(workers));
  for (auto& p : partial) p.assign(vol.size(), 0);
  parallel_for(8, workers, [&](int dir, int worker) {
    aggregate(cost, vol, kDirs[dir][0], kDirs[dir][1], cfg.p1, cfg.p2,
              partial[static_cast<std::size_t>(worker)]);
  });
  std::vector<std::uint16_t>& sum = partial[0];
  for (std::size_t k = 1; k < partial.size(); ++k) {
    for (std::size_t i = 0; i < sum.size(); ++i) {
      sum[i] = static_cast<std::uint16_t>(sum[i] + partial[k][i]);
    }
    partial[k].clear();
    partial[k].shrink_to_fit();
  }

  DisparityMap out;
  out.width = w;
  out.height = h;
  out.d_min = d_min;
  out.d_max = d_max;
  out.values.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h),
                    std::numeric_limits<float>::quiet_NaN());

  parallel_for(h, cfg.workers, [&](int y, int) {
    std::vector<int> right_best(static_cast<std::size_t>(w), -1);
    for (int xr = 0; xr < w; ++xr) {
      int best = -1;
      unsigned best_cost = std::numeric_limits<unsigned>::max();
      for (int di = 0; di < nd; ++di) {
        const int xl = xr + d_min + di;
        if (xl < 0 || xl >= w) continue;
        const unsigned s = sum[vol.index(xl, y, di)];
        if (s < best_cost) {
          best_cost = s;
          best = di;
        }
      }
      right_best[static_cast<std::size_t>(xr)] = best;
    }
    for (int x = 0; x < w; ++x) {
      const std::uint16_t* s = sum.data() + vol.index(x, y, 0);
      int best = 0;
      for (int di = 1; di < nd; ++di) {
        if (s[di] < s[best]) best = di;
      }
      const int xr = x - (d_min + best);
      if (xr < 0 || xr >= w) continue;
      const int rb = right_best[static_cast<std::size_t>(xr)];
      if (rb < 0 || std::abs(rb - best) > cfg.lr_tolerance) continue;
      double d = d_min + best;
      if (best > 0 && best + 1 < nd) {
        const double a = s[best - 1], b = s[best], c = s[best + 1];
        const double denom = a - 2.0 * b + c;
        if (denom > 0.0) d += (a - c) / (2.0 * denom);
      }
      d = std::clamp(d, static_cast<double>(d_min), static_cast<double>(d_max));
      out.values[static_cast<std::size_t>(y) * w + x] = static_cast<float>(d);
    }
  });
  return out;
}

DisparityMap sgm(const RectifiedPair& pair, const SgmConfig& cfg) {
  DisparityMap out = sgm(pair.left, pair.right, pair.map.d_min, pair.map.d_max, cfg);
  const int w = out.width;
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < w; ++x) {
      float& v = out.values[static_cast<std::size_t>(y) * w + x];
      if (std::isnan(v)) continue;
      const int xr = static_cast<int>(std::lround(x - v));
      const bool ok = pair.left_valid[static_cast<std::size_t>(y) * w + x] &&
                      xr >= 0 && xr < w &&
                      pair.right_valid[static_cast<std::size_t>(y) * w + xr];
      if (!ok) v = std::numeric_limits<float>::quiet_NaN();
    }
  }
  return out;
}

}  // namespace satstereo
