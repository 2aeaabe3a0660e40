#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace conceptvae::text {

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double value);

double parse_double(std::string_view text);
std::int64_t parse_int(std::string_view text);
std::uint64_t parse_uint(std::string_view text);

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view text);

/// Reads the next line, stripping a trailing '\r'. Returns false at EOF.
bool next_line(std::istream& in, std::string& line);

/// Expects `line` to equal `tag`; throws std::runtime_error naming what was read.
void expect_header(std::istream& in, std::string_view tag, std::string_view artifact);

std::ifstream open_input(const std::filesystem::path& path);
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace conceptvae::text
