#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace nl2sql {

bool iequals(std::string_view lhs, std::string_view rhs);
std::string to_lower(std::string_view text);
std::string to_upper(std::string_view text);
std::string_view trim(std::string_view text);
std::vector<std::string> split_lines(std::string_view text);

// Collapses every whitespace run to a single space and trims the ends.
std::string collapse_whitespace(std::string_view text);

std::string read_file(const std::filesystem::path& path);

// Hex SHA-256 of the input bytes.
std::string sha256_hex(std::string_view bytes);

}  // namespace nl2sql
