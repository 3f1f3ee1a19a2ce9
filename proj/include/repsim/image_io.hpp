#pragma once

#include <filesystem>

#include "repsim/variant_gen.hpp"

namespace repsim {

/// Decodes PNG or JPEG into an RGB (or single-channel) tensor whose
/// sample_id is the file stem. Alpha is dropped. Throws IoError.
ImageTensor read_image(const std::filesystem::path& path);

/// Lossless PNG encode. Throws IoError.
void write_png(const ImageTensor& image, const std::filesystem::path& path);

/// Single-channel mask image thresholded at value > 127.
BinaryMask read_mask(const std::filesystem::path& path);

}  // namespace repsim
