#include "satstereo/matches.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <tuple>

#include "satstereo/errors.hpp"

namespace satstereo {

namespace {

double squared_distance(const Descriptor& a, const Descriptor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < kDescriptorSize; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != ' ' && c != '\t' && c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

bool parse_number(const std::string& token, double& out) {
  if (token.empty()) return false;
  const char* begin = token.data();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, token.data() + token.size(), out);
  return ec == std::errc() && ptr == token.data() + token.size() && std::isfinite(out);
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

using DedupKey = std::tuple<long long, long long, long long, long long>;

DedupKey dedup_key(const Match& m) {
  auto q = [](double v) { return static_cast<long long>(std::llround(v * 1000.0)); };
  return {q(m.p1.sample), q(m.p1.line), q(m.p2.sample), q(m.p2.line)};
}

}  // namespace

MatchValidation sanitize(MatchSet& set) {
  MatchValidation v;
  std::set<DedupKey> seen;
  std::vector<Match> kept;
  kept.reserve(set.matches.size());
  for (const auto& m : set.matches) {
    if (!set.size_a.contains(m.p1) || !set.size_b.contains(m.p2)) {
      ++v.out_of_bounds;
      continue;
    }
    if (!seen.insert(dedup_key(m)).second) {
      ++v.duplicates;
      continue;
    }
    kept.push_back(m);
  }
  set.matches = std::move(kept);
  return v;
}

RatioTestResult ratio_test(std::span<const Descriptor> a, std::span<const Descriptor> b,
                           double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ValidationError("ratio must lie in (0, 1]");
  RatioTestResult out;
  if (b.size() < 2) {
    out.dropped_queries = a.size();
    return out;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    double second = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double d = squared_distance(a[i], b[j]);
      if (d < best) {
        second = best;
        best = d;
        best_j = j;
      } else if (d < second) {
        second = d;
      }
    }
    const double d1 = std::sqrt(best);
    const double d2 = std::sqrt(second);
    if (d1 < ratio * d2) out.matches.push_back({i, best_j, d1, d2});
  }
  return out;
}

RatioTestResult match_descriptors(std::span<const Descriptor> a,
                                  std::span<const Descriptor> b, double ratio,
                                  bool crosscheck) {
  RatioTestResult forward = ratio_test(a, b, ratio);
  if (!crosscheck) return forward;
  const RatioTestResult backward = ratio_test(b, a, ratio);
  std::vector<std::size_t> back_of(b.size(), std::numeric_limits<std::size_t>::max());
  for (const auto& m : backward.matches) back_of[m.query] = m.train;
  RatioTestResult out;
  out.dropped_queries = forward.dropped_queries;
  for (const auto& m : forward.matches) {
    if (back_of[m.train] == m.query) out.matches.push_back(m);
  }
  return out;
}

MatchSet match_keypoints(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b,
                         const MatchOptions& opts, std::string pair_id, ImageSize size_a,
                         ImageSize size_b) {
  MatchSet set{std::move(pair_id), "baseline", size_a, size_b, {}};
  if (a.empty() || b.empty()) return set;
  std::vector<Descriptor> da, db;
  da.reserve(a.size());
  db.reserve(b.size());
  for (const auto& k : a) da.push_back(k.descriptor);
  for (const auto& k : b) db.push_back(k.descriptor);
  const auto result = match_descriptors(da, db, opts.ratio, opts.crosscheck);
  for (const auto& m : result.matches) {
    // Ratio margin as a [0, 1] confidence: 1 - d1/d2.
    const double score = m.d2 > 0.0 ? 1.0 - m.d1 / m.d2 : 1.0;
    set.matches.push_back({a[m.query].position, b[m.train].position, score});
  }
  sanitize(set);
  return set;
}

MatchSet baseline_match(const GrayImage& a, const GrayImage& b, const MatchOptions& opts,
                        std::string pair_id, const DetectorConfig& det) {
  const auto ka = detect_and_describe(a, det);
  const auto kb = detect_and_describe(b, det);
  return match_keypoints(ka, kb, opts, std::move(pair_id), {a.width(), a.height()},
                         {b.width(), b.height()});
}

MatchLoadReport parse_matches(const std::string& text, std::string pair_id, std::string method,
                              ImageSize size_a, ImageSize size_b) {
  MatchLoadReport report;
  report.set = MatchSet{std::move(pair_id), std::move(method), size_a, size_b, {}};
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  std::set<DedupKey> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (columns == 0) {
      if (line.empty()) continue;
      const auto header = split(line);
      const std::vector<std::string> base = {"x1", "y1", "x2", "y2"};
      if (header.size() < 4 || header.size() > 5 ||
          !std::equal(base.begin(), base.end(), header.begin()) ||
          (header.size() == 5 && header[4] != "score")) {
        throw ParseError("match file header must be x1,y1,x2,y2[,score]", line_no);
      }
      columns = header.size();
      continue;
    }
    if (line.empty()) continue;
    const auto tok = split(line);
    if (tok.size() != columns) {
      throw ParseError("expected " + std::to_string(columns) + " columns", line_no);
    }
    double v[5] = {};
    for (std::size_t i = 0; i < columns; ++i) {
      if (!parse_number(tok[i], v[i])) throw ParseError("malformed number '" + tok[i] + "'", line_no);
    }
    Match m{{v[0], v[1]}, {v[2], v[3]}, std::nullopt};
    if (columns == 5) {
      if (v[4] < 0.0 || v[4] > 1.0) {
        report.rejected.push_back({line_no, "score outside [0, 1]"});
        continue;
      }
      m.score = v[4];
    }
    if (!size_a.contains(m.p1)) {
      report.rejected.push_back({line_no, "first point outside image bounds"});
      continue;
    }
    if (!size_b.contains(m.p2)) {
      report.rejected.push_back({line_no, "second point outside image bounds"});
      continue;
    }
    if (!seen.insert(dedup_key(m)).second) {
      ++report.duplicates;
      continue;
    }
    report.set.matches.push_back(m);
  }
  return report;
}

MatchLoadReport load_matches(const std::filesystem::path& path, std::string pair_id,
                             std::string method, ImageSize size_a, ImageSize size_b) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open match file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_matches(buf.str(), std::move(pair_id), std::move(method), size_a, size_b);
}

std::string format_matches(const MatchSet& set) {
  bool with_score = false;
  for (const auto& m : set.matches) with_score = with_score || m.score.has_value();
  std::string out = with_score ? "x1,y1,x2,y2,score\n" : "x1,y1,x2,y2\n";
  for (const auto& m : set.matches) {
    out += format_double(m.p1.sample) + ',' + format_double(m.p1.line) + ',' +
           format_double(m.p2.sample) + ',' + format_double(m.p2.line);
    if (with_score) out += ',' + format_double(m.score.value_or(0.0));
    out += '\n';
  }
  return out;
}

void write_matches(const MatchSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write match file " + path.string());
  out << format_matches(set);
}

}  // namespace satstereo
