#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "inpaint360/image.hpp"

namespace inpaint360 {

// 8-bit RGB; values are clamped to [0, 1] and rounded to the nearest level.
void write_png_rgb(const std::string& path, const RgbImage& img);
RgbImage read_png_rgb(const std::string& path);

void write_png_gray8(const std::string& path, const Image<std::uint8_t>& img);
Image<std::uint8_t> read_png_gray8(const std::string& path);

void write_png_gray16(const std::string& path, const Image<std::uint16_t>& img);
Image<std::uint16_t> read_png_gray16(const std::string& path);

// Palette PNG: pixel values index into the palette.
void write_png_palette(const std::string& path, const Image<std::uint8_t>& idx,
                       const std::vector<std::array<std::uint8_t, 3>>& palette);
Image<std::uint8_t> read_png_palette(const std::string& path);

// Binary masks on disk are 8-bit gray with values 0 or 255 only.
void write_mask_png(const std::string& path, const Mask& mask);
Mask read_mask_png(const std::string& path);

inline std::uint8_t quantize8(float x) {
  const float c = x < 0.0f ? 0.0f : (x > 1.0f ? 1.0f : x);
  return static_cast<std::uint8_t>(c * 255.0f + 0.5f);
}

// Round-trips an image through 8-bit quantization, as writing/reading would.
RgbImage quantize_rgb(const RgbImage& img);

}  // namespace inpaint360
