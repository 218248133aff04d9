#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "ape/field.hpp"

namespace ape {

/// Binary PGM (P5, maxval 255). Pixel value = round(255 * v); values must lie
/// in [0, 1]. Decoding maps byte b to b / 255.0.
std::string encode_pgm(const Field2D& f);
Field2D decode_pgm(std::string_view bytes);

void write_pgm(const std::filesystem::path& path, const Field2D& f);
Field2D read_pgm(const std::filesystem::path& path);

/// Quantizes to the 8-bit grid PGM stores: round(255 * v) / 255.
Field2D quantize8(const Field2D& f);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

} // namespace ape
