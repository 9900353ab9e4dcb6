#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "strokescope/raster.hpp"

namespace strokescope {

using Bytes = std::vector<std::uint8_t>;

// 8-bit grayscale, conventional polarity: ink (1.0) becomes black (0),
// background (0.0) becomes white (255).
std::vector<std::uint8_t> to_gray8(const RasterImage& img);

Bytes encode_png_gray(const RasterImage& img);
Bytes encode_png_rgb(int w, int h, std::span<const std::uint8_t> rgb);

// Binary PGM (P5) with the same polarity as the PNG export.
Bytes encode_pgm(const RasterImage& img);

// Diverging blue-white-red colouring of a signed map, scaled by max |v|.
std::vector<std::uint8_t> heatmap_rgb(const Grid& values);

// Width and height from a PNG's IHDR chunk; throws IoError on malformed data.
std::pair<int, int> png_dimensions(std::span<const std::uint8_t> png);

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
Bytes base64_decode(const std::string& text);

} // namespace strokescope
