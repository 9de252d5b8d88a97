#include "graphdkl/array_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "graphdkl/errors.hpp"

namespace graphdkl {

namespace {

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return __builtin_bswap64(v);
  }
}

}  // namespace

void write_f64_array(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const double v : t.data()) {
    const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Tensor read_f64_array(const std::filesystem::path& path, std::size_t rows, std::size_t cols) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != rows * cols * sizeof(double)) {
    throw IoError(path.filename().string() + ": expected " + std::to_string(rows * cols) +
                  " values, file holds " + std::to_string(bytes) + " bytes");
  }
  in.seekg(0);
  Tensor t(rows, cols);
  for (double& v : t.data()) {
    std::uint64_t bits = 0;
    in.read(reinterpret_cast<char*>(&bits), sizeof bits);
    v = std::bit_cast<double>(to_little_endian(bits));
  }
  if (!in) throw IoError("read failed for " + path.string());
  return t;
}

std::string save_param_arrays(const ParamSet& params, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json index = nlohmann::json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& t = params.at(i);
    write_f64_array(dir / (params.name(i) + ".f64"), t);
    index.push_back({{"name", params.name(i)}, {"shape", {t.rows(), t.cols()}}});
  }
  return index.dump();
}

ParamSet load_param_arrays(const std::string& index_json, const std::filesystem::path& dir) {
  ParamSet out;
  try {
    for (const auto& entry : nlohmann::json::parse(index_json)) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape");
      out.add(name, read_f64_array(dir / (name + ".f64"), shape.at(0).get<std::size_t>(),
                                   shape.at(1).get<std::size_t>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("array index: " + std::string(e.what()));
  }
  return out;
}

}  // namespace graphdkl
