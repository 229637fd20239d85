#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "vlx/types.hpp"

namespace vlx {

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // row-major
};

struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // row-major, 3 bytes per pixel
};

// Binary 8-bit PGM (P5). The canonical lossless interchange format here.
void write_pgm(const std::filesystem::path& path, const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);

// Minimal PNG subset: 8-bit non-interlaced grayscale or RGB, zlib-deflated.
void write_png_gray(const std::filesystem::path& path, const GrayImage& img);
void write_png_rgb(const std::filesystem::path& path, const RgbImage& img);
GrayImage read_png_gray(const std::filesystem::path& path);

// Reads PGM (P5, 8-bit) or PNG (8-bit grayscale), scales bytes to [0,1] and
// nearest-neighbor resizes to target_side x target_side when needed.
ImageInput load_image(const std::filesystem::path& path, std::size_t target_side);

}  // namespace vlx
