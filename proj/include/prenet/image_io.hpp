#pragma once

#include <cstdint>
#include <filesystem>

#include "prenet/tensor.hpp"

namespace prenet {

// Byte value for an intensity: clamp to [0, 1], then floor(v * 255 + 0.5).
std::uint8_t quantize(float value);

// 8-bit RGB PNG to a (1, 3, h, w) tensor with values byte / 255.
// Raises IoError for unreadable files and UnsupportedFormatError for
// anything that is not 8-bit RGB.
Tensor<float> load_image(const std::filesystem::path& path);

// Writes a (1, 3, h, w) tensor as 8-bit RGB PNG through quantize().
void save_image(const Tensor<float>& image, const std::filesystem::path& path);

}  // namespace prenet
