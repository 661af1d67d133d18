#include "satstereo/pair_selection.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>

#include <Eigen/Geometry>

#include "satstereo/errors.hpp"
#include "satstereo/random.hpp"
#include "satstereo/rpc_io.hpp"

namespace satstereo {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Eigen::Vector3d sun_vector(const ImageMeta& m) {
  const double az = m.sun_azimuth * kDeg;
  const double el = m.sun_elevation * kDeg;
  return {std::sin(az) * std::cos(el), std::cos(az) * std::cos(el), std::sin(el)};
}

std::string date_string(const CalendarDate& d) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
  return buf;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

ImageMeta meta_from_json(const nlohmann::json& j, const std::filesystem::path& base) {
  ImageMeta m;
  m.image_id = j.at("image_id").get<std::string>();
  m.acquisition_date = parse_date(j.at("date").get<std::string>());
  m.sun_azimuth = j.at("sun_azimuth").get<double>();
  m.sun_elevation = j.at("sun_elevation").get<double>();
  m.gsd = j.value("gsd", 0.5);
  m.rpc_path = resolve(base, j.at("rpc_path").get<std::string>());
  if (j.contains("image_path")) m.image_path = resolve(base, j.at("image_path").get<std::string>());
  validate(m);
  return m;
}

nlohmann::json meta_to_json(const ImageMeta& m) {
  return {{"image_id", m.image_id},
          {"date", date_string(m.acquisition_date)},
          {"sun_azimuth", m.sun_azimuth},
          {"sun_elevation", m.sun_elevation},
          {"gsd", m.gsd},
          {"rpc_path", m.rpc_path.string()},
          {"image_path", m.image_path.string()}};
}

}  // namespace

CalendarDate parse_date(const std::string& text) {
  CalendarDate d;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%d-%d-%d%c", &d.year, &d.month, &d.day, &tail) != 3) {
    throw ValidationError("date must be YYYY-MM-DD: " + text);
  }
  const std::chrono::year_month_day ymd{std::chrono::year(d.year),
                                        std::chrono::month(static_cast<unsigned>(d.month)),
                                        std::chrono::day(static_cast<unsigned>(d.day))};
  if (!ymd.ok()) throw ValidationError("invalid calendar date: " + text);
  return d;
}

void validate(const ImageMeta& meta) {
  if (!(meta.sun_elevation > 0.0 && meta.sun_elevation <= 90.0)) {
    throw ValidationError("sun elevation out of (0, 90] for " + meta.image_id);
  }
  if (!(meta.sun_azimuth >= 0.0 && meta.sun_azimuth < 360.0)) {
    throw ValidationError("sun azimuth out of [0, 360) for " + meta.image_id);
  }
  if (meta.acquisition_date.month < 1 || meta.acquisition_date.month > 12) {
    throw ValidationError("month out of range for " + meta.image_id);
  }
}

int month_diff(int month_a, int month_b) {
  if (month_a < 1 || month_a > 12 || month_b < 1 || month_b > 12) {
    throw ValidationError("month must lie in 1..12");
  }
  const int d = std::abs(month_a - month_b);
  return std::min(d, 12 - d);
}

double sun_angle_diff(const ImageMeta& a, const ImageMeta& b) {
  const Eigen::Vector3d va = sun_vector(a);
  const Eigen::Vector3d vb = sun_vector(b);
  return std::atan2(va.cross(vb).norm(), va.dot(vb)) / kDeg;
}

double rank_score(int month_difference, double sun_difference) {
  return month_difference / 6.0 + sun_difference / 180.0;
}

PairSelection enumerate_pairs(const std::vector<TileImage>& images,
                              const SelectionConfig& cfg) {
  if (!(cfg.angle_min >= 0.0 && cfg.angle_min < cfg.angle_max)) {
    throw ValidationError("selection needs 0 <= angle_min < angle_max");
  }
  if (cfg.k < 1) throw ValidationError("selection needs k >= 1");

  PairSelection out;
  std::vector<const TileImage*> usable;
  for (const auto& img : images) {
    if (img.rpc) {
      usable.push_back(&img);
    } else {
      out.warnings.push_back("no camera for image " + img.meta.image_id + "; skipped");
    }
  }

  for (std::size_t i = 0; i < usable.size(); ++i) {
    for (std::size_t j = i + 1; j < usable.size(); ++j) {
      const TileImage* a = usable[i];
      const TileImage* b = usable[j];
      if (b->meta.image_id < a->meta.image_id) std::swap(a, b);
      const auto& ca = a->rpc->coefficients();
      const auto& cb = b->rpc->coefficients();
      const GroundPoint center{0.5 * (ca.lat_off + cb.lat_off), 0.5 * (ca.lon_off + cb.lon_off),
                               0.5 * (ca.h_off + cb.h_off)};
      double angle;
      try {
        angle = intersection_angle(*a->rpc, *b->rpc, center);
      } catch (const Error& e) {
        out.warnings.push_back("angle failed for " + a->meta.image_id + "/" +
                               b->meta.image_id + ": " + e.what());
        continue;
      }
      if (angle < cfg.angle_min || angle > cfg.angle_max) continue;
      PairCandidate c;
      c.id_a = a->meta.image_id;
      c.id_b = b->meta.image_id;
      c.intersection_angle = angle;
      c.sun_angle_diff = sun_angle_diff(a->meta, b->meta);
      c.month_diff = month_diff(a->meta.acquisition_date.month, b->meta.acquisition_date.month);
      c.rank_score = rank_score(c.month_diff, c.sun_angle_diff);
      out.pool.push_back(std::move(c));
    }
  }

  std::sort(out.pool.begin(), out.pool.end(), [](const PairCandidate& x, const PairCandidate& y) {
    if (x.rank_score != y.rank_score) return x.rank_score > y.rank_score;
    if (x.id_a != y.id_a) return x.id_a < y.id_a;
    return x.id_b < y.id_b;
  });

  const std::size_t k = static_cast<std::size_t>(cfg.k);
  if (out.pool.size() <= k) {
    out.selected = out.pool;
    return out;
  }
  // Partial Fisher-Yates over ranked positions, then restore rank order.
  std::vector<std::size_t> idx(out.pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(cfg.seed);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.index(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  for (std::size_t i : idx) out.selected.push_back(out.pool[i]);
  return out;
}

PairSelection enumerate_pairs(const std::vector<ImageMeta>& images,
                              const SelectionConfig& cfg) {
  if (images.size() < 2) throw ValidationError("pair enumeration needs at least 2 images");
  std::vector<TileImage> tile;
  std::vector<std::string> load_warnings;
  for (const auto& m : images) {
    try {
      tile.push_back(TileImage{m, load_rpc(m.rpc_path)});
    } catch (const Error& e) {
      load_warnings.push_back("unreadable RPC for " + m.image_id + "; skipped: " + e.what());
    }
  }
  PairSelection sel = enumerate_pairs(tile, cfg);
  sel.warnings.insert(sel.warnings.begin(), load_warnings.begin(), load_warnings.end());
  return sel;
}

std::vector<TileManifest> load_tile_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  const auto base = path.parent_path();
  std::vector<nlohmann::json> tile_nodes;
  if (j.contains("tiles")) {
    for (const auto& t : j.at("tiles")) tile_nodes.push_back(t);
  } else {
    tile_nodes.push_back(j);
  }
  std::vector<TileManifest> tiles;
  try {
    for (const auto& t : tile_nodes) {
      TileManifest tm;
      tm.tile_id = t.value("tile_id", std::string("tile"));
      for (const auto& img : t.at("images")) tm.images.push_back(meta_from_json(img, base));
      if (t.contains("truth_dsm")) tm.truth_dsm = resolve(base, t.at("truth_dsm").get<std::string>());
      if (t.contains("roi")) tm.roi = roi_from_json(t.at("roi"));
      if (t.contains("matches")) {
        for (const auto& [method, pattern] : t.at("matches").items()) {
          tm.match_files.emplace_back(method, resolve(base, pattern.get<std::string>()).string());
        }
      }
      tiles.push_back(std::move(tm));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest " + path.string() + ": " + e.what());
  }
  return tiles;
}

nlohmann::json roi_to_json(const GroundRect& roi) {
  return {{"lat_min", roi.lat_min}, {"lat_max", roi.lat_max}, {"lon_min", roi.lon_min},
          {"lon_max", roi.lon_max}, {"h_min", roi.h_min},     {"h_max", roi.h_max}};
}

GroundRect roi_from_json(const nlohmann::json& j) {
  GroundRect r;
  r.lat_min = j.at("lat_min").get<double>();
  r.lat_max = j.at("lat_max").get<double>();
  r.lon_min = j.at("lon_min").get<double>();
  r.lon_max = j.at("lon_max").get<double>();
  r.h_min = j.at("h_min").get<double>();
  r.h_max = j.at("h_max").get<double>();
  if (!(r.lat_min < r.lat_max && r.lon_min < r.lon_max && r.h_min <= r.h_max)) {
    throw ValidationError("ROI bounds are inverted");
  }
  return r;
}

std::string make_pair_id(const std::string& tile, const PairCandidate& c) {
  return tile + "_" + c.id_a + "_" + c.id_b;
}

std::vector<PairEntry> select_pairs(const std::vector<TileManifest>& tiles,
                                    const SelectionConfig& cfg,
                                    std::vector<std::string>* warnings) {
  std::vector<PairEntry> out;
  for (const auto& tile : tiles) {
    SelectionConfig tile_cfg = cfg;
    tile_cfg.seed = derive_seed(cfg.seed, "pairs/" + tile.tile_id);
    PairSelection sel = enumerate_pairs(tile.images, tile_cfg);
    if (warnings) warnings->insert(warnings->end(), sel.warnings.begin(), sel.warnings.end());
    for (const auto& c : sel.selected) {
      PairEntry e;
      e.pair_id = make_pair_id(tile.tile_id, c);
      e.tile_id = tile.tile_id;
      e.candidate = c;
      for (const auto& m : tile.images) {
        if (m.image_id == c.id_a) e.image_a = m;
        if (m.image_id == c.id_b) e.image_b = m;
      }
      e.truth_dsm = tile.truth_dsm;
      e.roi = tile.roi;
      e.match_files = tile.match_files;
      out.push_back(std::move(e));
    }
  }
  return out;
}

nlohmann::json pairs_to_json(const std::vector<PairEntry>& pairs, const SelectionConfig& cfg) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : pairs) {
    nlohmann::json e = {{"pair_id", p.pair_id},
                        {"tile_id", p.tile_id},
                        {"id_a", p.candidate.id_a},
                        {"id_b", p.candidate.id_b},
                        {"intersection_angle", p.candidate.intersection_angle},
                        {"sun_angle_diff", p.candidate.sun_angle_diff},
                        {"month_diff", p.candidate.month_diff},
                        {"rank_score", p.candidate.rank_score},
                        {"image_a", meta_to_json(p.image_a)},
                        {"image_b", meta_to_json(p.image_b)}};
    if (p.truth_dsm) e["truth_dsm"] = p.truth_dsm->string();
    if (p.roi) e["roi"] = roi_to_json(*p.roi);
    if (!p.match_files.empty()) {
      nlohmann::json mf = nlohmann::json::object();
      for (const auto& [method, pattern] : p.match_files) mf[method] = pattern;
      e["matches"] = mf;
    }
    arr.push_back(std::move(e));
  }
  return {{"selection",
           {{"angle_min", cfg.angle_min}, {"angle_max", cfg.angle_max}, {"k", cfg.k},
            {"seed", cfg.seed}}},
          {"pairs", arr}};
}

std::vector<PairEntry> pairs_from_json(const nlohmann::json& j) {
  std::vector<PairEntry> out;
  try {
    for (const auto& e : j.at("pairs")) {
      PairEntry p;
      p.pair_id = e.at("pair_id").get<std::string>();
      p.tile_id = e.value("tile_id", std::string());
      p.candidate.id_a = e.at("id_a").get<std::string>();
      p.candidate.id_b = e.at("id_b").get<std::string>();
      p.candidate.intersection_angle = e.value("intersection_angle", 0.0);
      p.candidate.sun_angle_diff = e.value("sun_angle_diff", 0.0);
      p.candidate.month_diff = e.value("month_diff", 0);
      p.candidate.rank_score = e.value("rank_score", 0.0);
      // Paths inside a pairs manifest are already resolved.
      p.image_a = meta_from_json(e.at("image_a"), {});
      p.image_b = meta_from_json(e.at("image_b"), {});
      if (e.contains("truth_dsm")) p.truth_dsm = e.at("truth_dsm").get<std::string>();
      if (e.contains("roi")) p.roi = roi_from_json(e.at("roi"));
      if (e.contains("matches")) {
        for (const auto& [method, pattern] : e.at("matches").items()) {
          p.match_files.emplace_back(method, pattern.get<std::string>());
        }
      }
      out.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("malformed pairs manifest: ") + ex.what());
  }
  return out;
}

std::vector<PairEntry> load_pairs_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pairs manifest " + path.string());
  try {
    return pairs_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("pairs manifest is not valid JSON: " + std::string(e.what()));
  }
}

void save_pairs_manifest(const std::vector<PairEntry>& pairs, const SelectionConfig& cfg,
                         const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pairs manifest " + path.string());
  out << pairs_to_json(pairs, cfg).dump(2) << '\n';
}

}  // namespace satstereo
