#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

namespace gf {

// FNV-1a over the canonical JSON dump; recorded in every artifact so runs
// can be traced back to their exact configuration.
std::uint64_t fnv1a(const std::string& s);
std::string fnv1a_hex(const std::string& s);
inline std::string config_hash(const nlohmann::json& j) { return fnv1a_hex(j.dump()); }

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace gf
