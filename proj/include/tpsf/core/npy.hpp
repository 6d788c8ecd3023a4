#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace tpsf {

/// Row-major little-endian float64 matrix as stored in an NPY v1.0 file.
struct NpyArray {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
};

void write_npy(const std::filesystem::path &path, const NpyArray &array);

/// Reads a 2-D '<f8' C-order array. Throws Error with MissingFile, BadMagic,
/// BadHeader or ShapeMismatch (payload shorter or longer than the header shape).
NpyArray read_npy(const std::filesystem::path &path);

} // namespace tpsf
