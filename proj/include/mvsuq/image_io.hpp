#pragma once

#include <string>

#include "mvsuq/common.hpp"

namespace mvsuq {

// Reads PNG (8/16-bit gray or RGB/RGBA) or binary PGM/PPM into an 8-bit
// grayscale raster. Color inputs use rec.601 luma, rounded to nearest.
Raster8 read_image_gray(const std::string& path);

void write_pgm(const std::string& path, const Raster8& img);
void write_png_gray(const std::string& path, const Raster8& img);

uint8_t luma601(uint8_t r, uint8_t g, uint8_t b);

}  // namespace mvsuq
