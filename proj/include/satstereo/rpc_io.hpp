#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "satstereo/rpc.hpp"

namespace satstereo {

/// Parses the IKONOS-style `*_RPC.TXT` key/value format. Trailing unit words
/// ("pixels", "degrees", "meters") are ignored.
RpcModel parse_rpc_text(const std::string& text);
std::string format_rpc_text(const RpcModel& model);

/// JSON mirror: lower-case keys (`line_off`, ..., `line_num_coeff`: [20 values]).
RpcModel rpc_from_json(const nlohmann::json& j);
nlohmann::json rpc_to_json(const RpcModel& model);

/// Loads by extension: `.json` uses the JSON mirror, anything else the text format.
RpcModel load_rpc(const std::filesystem::path& path);
void save_rpc(const RpcModel& model, const std::filesystem::path& path);

}  // namespace satstereo
