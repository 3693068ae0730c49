#pragma once

#include <filesystem>

#include "field.hpp"

namespace dmk::io {

// PFM: "Pf" (one channel) or "PF" (three channels), scale -1.0 for
// little-endian float32, rows stored bottom-to-top. Big-endian files
// (positive scale) are accepted on read.
void write_pfm(const std::filesystem::path& path, const Field& f);
void write_pfm(const std::filesystem::path& path, const Field3& f);
Field read_pfm(const std::filesystem::path& path);
Field3 read_pfm3(const std::filesystem::path& path);

// 8-bit binary PPM (P6) / PGM (P5). Values in [0, 1] are clamped and rounded
// to the nearest of 256 levels; reads return level / maxval.
void write_ppm(const std::filesystem::path& path, const RgbImage& img);
RgbImage read_ppm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Field& f);
Field read_pgm(const std::filesystem::path& path);

// Quantises like a write/read round trip through PPM/PGM.
double quantize8(double x);

}  // namespace dmk::io
