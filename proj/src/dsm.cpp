#include "satstereo/dsm.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "satstereo/errors.hpp"

namespace satstereo {

DsmGrid::DsmGrid(GridSpec spec, double fill) : spec_(spec) {
  if (!(spec.cell_size > 0.0)) throw ValidationError("grid cell size must be positive");
  if (spec.width < 0 || spec.height < 0) throw ValidationError("grid dimensions must be non-negative");
  z_.assign(static_cast<std::size_t>(spec.width) * static_cast<std::size_t>(spec.height), fill);
}

std::size_t DsmGrid::valid_count() const {
  std::size_t n = 0;
  for (double v : z_) n += std::isnan(v) ? 0 : 1;
  return n;
}

double DsmGrid::sample(double x, double y, double* dzdx, double* dzdy) const {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  const double fc = (x - spec_.x_min) / spec_.cell_size - 0.5;
  const double fr = (spec_.y_max() - y) / spec_.cell_size - 0.5;
  if (!(fc >= 0.0 && fr >= 0.0 && fc <= spec_.width - 1 && fr <= spec_.height - 1)) return nan;
  int c0 = static_cast<int>(fc);
  int r0 = static_cast<int>(fr);
  c0 = std::min(c0, spec_.width - 2);
  r0 = std::min(r0, spec_.height - 2);
  if (c0 < 0 || r0 < 0) return nan;
  const double tx = fc - c0;
  const double ty = fr - r0;
  const double z00 = at(c0, r0), z10 = at(c0 + 1, r0);
  const double z01 = at(c0, r0 + 1), z11 = at(c0 + 1, r0 + 1);
  if (std::isnan(z00) || std::isnan(z10) || std::isnan(z01) || std::isnan(z11)) return nan;
  const double top = z00 * (1 - tx) + z10 * tx;
  const double bottom = z01 * (1 - tx) + z11 * tx;
  if (dzdx) *dzdx = ((z10 - z00) * (1 - ty) + (z11 - z01) * ty) / spec_.cell_size;
  // Rows grow southward, so northing decreases with fr.
  if (dzdy) *dzdy = -(bottom - top) / spec_.cell_size;
  return top * (1 - ty) + bottom * ty;
}

DsmGrid parse_ascii_grid(const std::string& text) {
  std::istringstream in(text);
  GridSpec spec;
  double nodata = kAsciiNodata;
  bool has_cols = false, has_rows = false, has_x = false, has_y = false, has_cell = false;
  bool x_center = false, y_center = false;
  std::size_t line_no = 0;
  // Header lines: keyword followed by a value, until the first numeric token.
  std::streampos data_start = in.tellg();
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) {
      data_start = in.tellg();
      continue;
    }
    if (!std::isalpha(static_cast<unsigned char>(key[0]))) break;
    std::string lower;
    for (char c : key) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    double v = 0.0;
    if (!(ls >> v)) throw ParseError("missing value for " + key, line_no);
    if (lower == "ncols") { spec.width = static_cast<int>(v); has_cols = true; }
    else if (lower == "nrows") { spec.height = static_cast<int>(v); has_rows = true; }
    else if (lower == "xllcorner") { spec.x_min = v; has_x = true; }
    else if (lower == "yllcorner") { spec.y_min = v; has_y = true; }
    else if (lower == "xllcenter") { spec.x_min = v; has_x = true; x_center = true; }
    else if (lower == "yllcenter") { spec.y_min = v; has_y = true; y_center = true; }
    else if (lower == "cellsize") { spec.cell_size = v; has_cell = true; }
    else if (lower == "nodata_value") { nodata = v; }
    else throw ParseError("unknown ASCII grid header " + key, line_no);
    data_start = in.tellg();
  }
  if (!(has_cols && has_rows && has_x && has_y && has_cell)) {
    throw ParseError("incomplete ASCII grid header", line_no);
  }
  if (x_center) spec.x_min -= 0.5 * spec.cell_size;
  if (y_center) spec.y_min -= 0.5 * spec.cell_size;
  DsmGrid grid(spec);

  in.clear();
  in.seekg(data_start);
  const std::size_t total = static_cast<std::size_t>(spec.width) * static_cast<std::size_t>(spec.height);
  std::size_t n = 0;
  std::string tok;
  while (in >> tok) {
    if (n >= total) throw ParseError("ASCII grid holds more values than ncols*nrows", line_no);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw ParseError("malformed ASCII grid value '" + tok + "'", line_no);
    }
    const int row = static_cast<int>(n / static_cast<std::size_t>(spec.width));
    const int col = static_cast<int>(n % static_cast<std::size_t>(spec.width));
    grid.at(col, row) = (v == nodata || std::isnan(v)) ? std::numeric_limits<double>::quiet_NaN() : v;
    ++n;
  }
  if (n != total) throw ParseError("ASCII grid holds fewer values than ncols*nrows", line_no);
  return grid;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace

std::string format_ascii_grid(const DsmGrid& grid) {
  const auto& s = grid.spec();
  std::string out;
  out += "ncols " + std::to_string(s.width) + "\n";
  out += "nrows " + std::to_string(s.height) + "\n";
  out += "xllcorner " + fmt(s.x_min) + "\n";
  out += "yllcorner " + fmt(s.y_min) + "\n";
  out += "cellsize " + fmt(s.cell_size) + "\n";
  out += "NODATA_value " + fmt(kAsciiNodata) + "\n";
  for (int r = 0; r < s.height; ++r) {
    for (int c = 0; c < s.width; ++c) {
      if (c) out += ' ';
      const double v = grid.at(c, r);
      out += std::isnan(v) ? fmt(kAsciiNodata) : fmt(v);
    }
    out += '\n';
  }
  return out;
}

DsmGrid read_ascii_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ASCII grid " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_ascii_grid(buf.str());
}

void write_ascii_grid(const DsmGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write ASCII grid " + path.string());
  out << format_ascii_grid(grid);
}

std::string config_hash(const nlohmann::json& config) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_sidecar(const std::filesystem::path& raster, const nlohmann::json& provenance) {
  std::filesystem::path p = raster;
  p += ".json";
  std::ofstream out(p);
  if (!out) throw IoError("cannot write sidecar " + p.string());
  out << provenance.dump(2) << '\n';
}

}  // namespace satstereo
