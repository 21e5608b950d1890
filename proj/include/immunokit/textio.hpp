#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace immunokit {

// Shortest decimal text that parses back to exactly `value`.
std::string format_number(double value);

// Strict full-string parse; returns false on trailing garbage or overflow.
bool parse_number(std::string_view text, double& value);

std::vector<std::string_view> split(std::string_view line, char delimiter);
std::string_view trim(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace immunokit
