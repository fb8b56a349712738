#pragma once

#include "ncmfg/linalg.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ncmfg {

using Json = nlohmann::ordered_json;

std::uint32_t crc32_file(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const Json& j);

Json to_json(const Vec& v);
Vec vec_from_string(const std::string& text);

// Numeric columns with a header, each value as %.17e.
void write_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<double>>& rows);

}  // namespace ncmfg
