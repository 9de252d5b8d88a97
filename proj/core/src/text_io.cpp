#include "text_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "graphdkl/errors.hpp"

namespace graphdkl::detail {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << contents;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view token, const std::string& where) {
  token = trim(token);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || token.empty()) {
    throw ParseError(where + ": invalid number '" + std::string(token) + "'");
  }
  return value;
}

std::size_t parse_index(std::string_view token, const std::string& where) {
  token = trim(token);
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || token.empty()) {
    throw ParseError(where + ": invalid index '" + std::string(token) + "'");
  }
  return value;
}

Tensor read_numeric_csv(const std::filesystem::path& path, bool has_header) {
  const std::string text = read_file(path);
  std::vector<double> data;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (has_header && line_no == 1) continue;
    const auto fields = split(line, ',');
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    if (rows == 0) {
      cols = fields.size();
    } else if (fields.size() != cols) {
      throw ParseError(where + ": expected " + std::to_string(cols) + " columns, got " +
                       std::to_string(fields.size()));
    }
    for (const auto f : fields) data.push_back(parse_double(f, where));
    ++rows;
  }
  return Tensor(rows, cols, std::move(data));
}

void write_numeric_csv(const std::filesystem::path& path, const Tensor& t,
                       const std::string& header) {
  std::string out;
  if (!header.empty()) out += header + "\n";
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      if (c) out += ',';
      out += format_double(t(r, c));
    }
    out += '\n';
  }
  write_file(path, out);
}

}  // namespace graphdkl::detail
