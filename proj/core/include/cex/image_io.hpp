#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cex/types.hpp"

namespace cex {

// PNG codec over libpng. Grayscale and palette inputs are expanded to RGB,
// alpha is dropped, 16-bit channels are reduced to 8 bits.
Image decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const Image& image);

Image read_png(const std::string& path);
void write_png(const Image& image, const std::string& path);

// Masks are stored as 8-bit grayscale with 0 / 255.
Mask read_mask_png(const std::string& path);
void write_mask_png(const Mask& mask, const std::string& path);

// 16-bit grayscale, row-major values.
std::vector<std::uint8_t> encode_png_gray16(int width, int height,
                                            std::span<const std::uint16_t> values);
std::vector<std::uint16_t> decode_png_gray16(std::span<const std::uint8_t> bytes,
                                             int& width, int& height);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);
void write_text(const std::string& path, const std::string& text);

// Nearest-neighbour resample.
Image resample_nearest(const Image& image, int width, int height);

}  // namespace cex
