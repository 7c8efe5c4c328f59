#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dualface/common.hpp"

namespace dualface {

// Reads an 8-bit raster. Multi-channel files are rejected unless `allow_color`, in which
// case they are converted to grayscale.
GrayImage read_gray8(const std::filesystem::path& path, bool allow_color = false);

void write_gray8(const std::filesystem::path& path, const GrayImage& image);

std::vector<std::uint8_t> encode_png(const GrayImage& image);
GrayImage decode_png(const std::vector<std::uint8_t>& bytes);

// Binary raster (0/1) to {0,255} and back.
GrayImage to_gray8(const BinaryRaster& raster);
BinaryRaster from_gray8(const GrayImage& image);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);

}  // namespace dualface
