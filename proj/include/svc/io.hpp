#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "svc/raster.hpp"

namespace svc::io {

/// 8-bit PNG with 1 (gray) or 3 (RGB) channels, values mapped to [0,1].
Tensorf read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Tensorf& img);

std::vector<std::uint8_t> encode_png(const Tensorf& img);
Tensorf decode_png(const std::string& bytes);

/// Flow file: "SVCF", u32 width, u32 height, then height*width*(dx,dy) f32,
/// all little-endian, row-major.
void write_svcf(const std::filesystem::path& path, const FlowField& flow);
FlowField read_svcf(const std::filesystem::path& path);

std::string frame_name(const char* prefix, int index, const char* ext);

}  // namespace svc::io
