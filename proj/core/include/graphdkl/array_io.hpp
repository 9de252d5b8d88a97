#pragma once

#include <filesystem>
#include <string>

#include "graphdkl/params.hpp"
#include "graphdkl/tensor.hpp"

namespace graphdkl {

/// Raw little-endian IEEE-754 binary64 values, row-major, no header.
void write_f64_array(const std::filesystem::path& path, const Tensor& t);
/// Throws IoError when the file size disagrees with rows x cols.
Tensor read_f64_array(const std::filesystem::path& path, std::size_t rows, std::size_t cols);

/// Writes every entry as `<dir>/<name>.f64` and returns the JSON index
/// (name -> [rows, cols]) as a serialized string.
std::string save_param_arrays(const ParamSet& params, const std::filesystem::path& dir);
/// Inverse of save_param_arrays given the serialized index.
ParamSet load_param_arrays(const std::string& index_json, const std::filesystem::path& dir);

}  // namespace graphdkl
