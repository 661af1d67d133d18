#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "satstereo/rpc.hpp"

namespace satstereo {

struct CalendarDate {
  int year = 2000;
  int month = 1;
  int day = 1;
};

/// Parses `YYYY-MM-DD`; throws ValidationError on malformed or impossible dates.
CalendarDate parse_date(const std::string& text);

struct ImageMeta {
  std::string image_id;
  CalendarDate acquisition_date;
  double sun_azimuth = 0.0;    ///< degrees, [0, 360)
  double sun_elevation = 90.0; ///< degrees, (0, 90]
  double gsd = 0.5;            ///< meters per pixel
  std::filesystem::path rpc_path;
  std::filesystem::path image_path;
};

/// Throws ValidationError when sun angles or the month are out of range.
void validate(const ImageMeta& meta);

struct SelectionConfig {
  double angle_min = 5.0;
  double angle_max = 35.0;
  int k = 5;
  std::uint64_t seed = 0;
};

struct PairCandidate {
  std::string id_a;  ///< lexicographically smaller id
  std::string id_b;
  double intersection_angle = 0.0;
  double sun_angle_diff = 0.0;
  int month_diff = 0;
  double rank_score = 0.0;
};

/// Cyclic month-of-year difference, min(|a-b|, 12-|a-b|).
int month_diff(int month_a, int month_b);

/// Angle in degrees between the two sun direction vectors.
double sun_angle_diff(const ImageMeta& a, const ImageMeta& b);

/// month_diff/6 + sun_angle_diff/180.
double rank_score(int month_difference, double sun_difference);

/// An image with its (possibly unreadable) camera.
struct TileImage {
  ImageMeta meta;
  std::optional<RpcModel> rpc;
};

struct PairSelection {
  std::vector<PairCandidate> pool;      ///< every pair inside the angle window, ranked
  std::vector<PairCandidate> selected;  ///< seeded sample of at most k, in rank order
  std::vector<std::string> warnings;
};

/// Enumerates unordered pairs inside the inclusive angle window, ranks them by
/// (rank_score desc, id_a, id_b) and draws k without replacement.
PairSelection enumerate_pairs(const std::vector<TileImage>& images,
                              const SelectionConfig& cfg);

/// Loads each image's RPC from disk; unreadable cameras are skipped with a warning.
PairSelection enumerate_pairs(const std::vector<ImageMeta>& images,
                              const SelectionConfig& cfg);

// Manifest boundary -------------------------------------------------------

struct TileManifest {
  std::string tile_id;
  std::vector<ImageMeta> images;
  std::optional<std::filesystem::path> truth_dsm;
  /// Area to densify; truth DSM map coordinates are east/north meters of a
  /// local frame centered on it.
  std::optional<GroundRect> roi;
  /// Pre-computed external matches: method -> CSV path pattern with `{pair}`.
  std::vector<std::pair<std::string, std::string>> match_files;
};

/// Reads either a single tile object `{tile_id, images: [...]}` or
/// `{tiles: [...]}`. Relative paths resolve against the manifest directory.
nlohmann::json roi_to_json(const GroundRect& roi);
GroundRect roi_from_json(const nlohmann::json& j);

std::vector<TileManifest> load_tile_manifest(const std::filesystem::path& path);

struct PairEntry {
  std::string pair_id;  ///< `<tile>_<id_a>_<id_b>`
  std::string tile_id;
  PairCandidate candidate;
  ImageMeta image_a;
  ImageMeta image_b;
  std::optional<std::filesystem::path> truth_dsm;
  std::optional<GroundRect> roi;
  std::vector<std::pair<std::string, std::string>> match_files;
};

std::string make_pair_id(const std::string& tile, const PairCandidate& c);

nlohmann::json pairs_to_json(const std::vector<PairEntry>& pairs, const SelectionConfig& cfg);
std::vector<PairEntry> pairs_from_json(const nlohmann::json& j);

std::vector<PairEntry> load_pairs_manifest(const std::filesystem::path& path);
void save_pairs_manifest(const std::vector<PairEntry>& pairs, const SelectionConfig& cfg,
                         const std::filesystem::path& path);

/// Runs selection for every tile in a manifest.
std::vector<PairEntry> select_pairs(const std::vector<TileManifest>& tiles,
                                    const SelectionConfig& cfg,
                                    std::vector<std::string>* warnings = nullptr);

}  // namespace satstereo
