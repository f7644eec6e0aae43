#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

namespace insight::util {

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

// SHA-256 of the input, as a lowercase hex string.
std::string sha256_hex(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

// Write via a sibling temp file + rename so readers never see partial content.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Parses JSON out of model text that may wrap it in code fences or prose:
// tries the whole string first, then the outermost {...} or [...] span.
nlohmann::json parse_json_lenient(const std::string& text);

std::string format_fixed(double value, int decimals);

// Current UTC time as "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_timestamp();

std::string trim(std::string_view text);

} // namespace insight::util
