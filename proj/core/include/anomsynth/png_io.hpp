#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "anomsynth/image.hpp"

namespace anomsynth::png {

/// Decodes any 8/16-bit PNG into a 1- or 3-channel float image. Alpha is
/// dropped, palettes are expanded.
Image decode(std::span<const std::uint8_t> bytes);
Image read(const std::filesystem::path& path);

/// 8-bit encoding; samples are rounded to the nearest level.
std::vector<std::uint8_t> encode(const Image& img);
void write(const std::filesystem::path& path, const Image& img);

/// Single-channel 0/255 encoding.
std::vector<std::uint8_t> encode_mask(const BinaryMask& mask);
void write_mask(const std::filesystem::path& path, const BinaryMask& mask);
/// Any nonzero sample is a set bit.
BinaryMask read_mask(const std::filesystem::path& path);

bool has_png_signature(std::span<const std::uint8_t> bytes);

}  // namespace anomsynth::png
