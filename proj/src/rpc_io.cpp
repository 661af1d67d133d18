#include "satstereo/rpc_io.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "satstereo/errors.hpp"

namespace satstereo {

namespace {

struct ScalarKey {
  const char* text_key;
  const char* json_key;
  double RpcCoefficients::*field;
};

constexpr ScalarKey kScalars[] = {
    {"LINE_OFF", "line_off", &RpcCoefficients::line_off},
    {"SAMP_OFF", "samp_off", &RpcCoefficients::samp_off},
    {"LAT_OFF", "lat_off", &RpcCoefficients::lat_off},
    {"LONG_OFF", "lon_off", &RpcCoefficients::lon_off},
    {"HEIGHT_OFF", "h_off", &RpcCoefficients::h_off},
    {"LINE_SCALE", "line_scale", &RpcCoefficients::line_scale},
    {"SAMP_SCALE", "samp_scale", &RpcCoefficients::samp_scale},
    {"LAT_SCALE", "lat_scale", &RpcCoefficients::lat_scale},
    {"LONG_SCALE", "lon_scale", &RpcCoefficients::lon_scale},
    {"HEIGHT_SCALE", "h_scale", &RpcCoefficients::h_scale},
};

struct ArrayKey {
  const char* text_prefix;
  const char* json_key;
  std::array<double, 20> RpcCoefficients::*field;
};

constexpr ArrayKey kArrays[] = {
    {"LINE_NUM_COEFF_", "line_num_coeff", &RpcCoefficients::line_num},
    {"LINE_DEN_COEFF_", "line_den_coeff", &RpcCoefficients::line_den},
    {"SAMP_NUM_COEFF_", "samp_num_coeff", &RpcCoefficients::samp_num},
    {"SAMP_DEN_COEFF_", "samp_den_coeff", &RpcCoefficients::samp_den},
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace

RpcModel parse_rpc_text(const std::string& text) {
  std::map<std::string, std::pair<double, std::size_t>> values;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw ParseError("expected KEY: value", line_no);
    std::string key = trim(line.substr(0, colon));
    if (key == "LON_OFF") key = "LONG_OFF";
    if (key == "LON_SCALE") key = "LONG_SCALE";
    const std::string rest = trim(line.substr(colon + 1));
    char* end = nullptr;
    const double v = std::strtod(rest.c_str(), &end);
    if (end == rest.c_str()) throw ParseError("non-numeric value for " + key, line_no);
    values[key] = {v, line_no};
  }

  auto take = [&](const std::string& key) {
    auto it = values.find(key);
    if (it == values.end()) throw ParseError("missing RPC key " + key, line_no);
    return it->second.first;
  };

  RpcCoefficients c;
  for (const auto& k : kScalars) c.*(k.field) = take(k.text_key);
  for (const auto& k : kArrays) {
    for (int i = 0; i < 20; ++i) {
      (c.*(k.field))[static_cast<std::size_t>(i)] =
          take(std::string(k.text_prefix) + std::to_string(i + 1));
    }
  }
  return RpcModel(c);
}

std::string format_rpc_text(const RpcModel& model) {
  const auto& c = model.coefficients();
  std::ostringstream out;
  static const std::map<std::string, std::string> units = {
      {"LINE_OFF", "pixels"},   {"SAMP_OFF", "pixels"},    {"LAT_OFF", "degrees"},
      {"LONG_OFF", "degrees"},  {"HEIGHT_OFF", "meters"},  {"LINE_SCALE", "pixels"},
      {"SAMP_SCALE", "pixels"}, {"LAT_SCALE", "degrees"},  {"LONG_SCALE", "degrees"},
      {"HEIGHT_SCALE", "meters"}};
  for (const auto& k : kScalars) {
    out << k.text_key << ": " << format_double(c.*(k.field)) << ' '
        << units.at(k.text_key) << '\n';
  }
  for (const auto& k : kArrays) {
    for (int i = 0; i < 20; ++i) {
      out << k.text_prefix << (i + 1) << ": "
          << format_double((c.*(k.field))[static_cast<std::size_t>(i)]) << '\n';
    }
  }
  return out.str();
}

RpcModel rpc_from_json(const nlohmann::json& j) {
  RpcCoefficients c;
  try {
    for (const auto& k : kScalars) c.*(k.field) = j.at(k.json_key).get<double>();
    for (const auto& k : kArrays) {
      const auto& arr = j.at(k.json_key);
      if (!arr.is_array() || arr.size() != 20) {
        throw ValidationError(std::string(k.json_key) + " must hold 20 coefficients");
      }
      for (std::size_t i = 0; i < 20; ++i) (c.*(k.field))[i] = arr[i].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed RPC JSON: ") + e.what());
  }
  return RpcModel(c);
}

nlohmann::json rpc_to_json(const RpcModel& model) {
  const auto& c = model.coefficients();
  nlohmann::json j;
  for (const auto& k : kScalars) j[k.json_key] = c.*(k.field);
  for (const auto& k : kArrays) j[k.json_key] = c.*(k.field);
  return j;
}

RpcModel load_rpc(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open RPC file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  if (path.extension() == ".json") {
    try {
      return rpc_from_json(nlohmann::json::parse(buf.str()));
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("invalid JSON in " + path.string() + ": " + e.what());
    }
  }
  return parse_rpc_text(buf.str());
}

void save_rpc(const RpcModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write RPC file " + path.string());
  if (path.extension() == ".json") {
    out << rpc_to_json(model).dump(2) << '\n';
  } else {
    out << format_rpc_text(model);
  }
}

}  // namespace satstereo
