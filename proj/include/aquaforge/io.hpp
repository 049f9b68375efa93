#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "aquaforge/types.hpp"

namespace aquaforge {

// 8-bit 3-channel PNG. Values convert as v/255 on read, round(v*255) on
// write; writing expects inputs already in [0,1].
ImageRgb read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageRgb& img);

// AQF1 float field: 16-byte header (magic "AQF1", u32 height, u32 width,
// u32 channels, little-endian) then IEEE-754 float32 values, row-major,
// channel-interleaved.
void write_aqf(const std::filesystem::path& path, const Plane& field);
void write_aqf(const std::filesystem::path& path, const Field3& field);
Plane read_aqf_plane(const std::filesystem::path& path);
Field3 read_aqf_field3(const std::filesystem::path& path);

// CRC32 (zlib polynomial) of a whole file; used for corpus integrity hashes.
std::uint32_t crc32_file(const std::filesystem::path& path);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);

}  // namespace aquaforge
