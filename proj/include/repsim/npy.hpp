#pragma once

// Minimal NPY (format version 1.0) support for 2-D little-endian float32
// arrays in C order, the only layout the exchange format uses.
//
// Byte layout of a version 1.0 file:
//   6 bytes   magic "\x93NUMPY"
//   2 bytes   major, minor version (1, 0)
//   2 bytes   little-endian uint16 HEADER_LEN
//   HEADER_LEN bytes of ASCII python-dict literal, space padded and
//             terminated by '\n' so that 10 + HEADER_LEN is a multiple of 64
//   payload   rows * cols little-endian IEEE-754 binary32 values, row-major
//
// Version 2.0 files (4-byte HEADER_LEN) are accepted on read.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace repsim::npy {

struct Array2D {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;  // row-major, rows * cols entries
};

/// Full file image for a rows x cols float32 array.
std::string encode(std::size_t rows, std::size_t cols, std::span<const float> values);

/// Parses a file image. Throws IoError on malformed or truncated input.
Array2D decode(std::string_view bytes);

void write(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
           std::span<const float> values);
Array2D read(const std::filesystem::path& path);

}  // namespace repsim::npy
