#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "graphdkl/tensor.hpp"

namespace graphdkl::detail {

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

/// Shortest text that round-trips the double exactly (17 significant digits).
std::string format_double(double v);

/// Parses a full token as a double / non-negative integer; throws ParseError
/// mentioning `where` otherwise.
double parse_double(std::string_view token, const std::string& where);
std::size_t parse_index(std::string_view token, const std::string& where);

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

/// Numeric CSV with a fixed column count per row. An optional header row is
/// skipped when `has_header`.
Tensor read_numeric_csv(const std::filesystem::path& path, bool has_header);
void write_numeric_csv(const std::filesystem::path& path, const Tensor& t,
                       const std::string& header = {});

}  // namespace graphdkl::detail
