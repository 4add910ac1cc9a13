#pragma once

// File formats:
//   .flo  Middlebury flow: float32 magic 202021.25, int32 width, int32 height,
//         then row-major interleaved (u, v) float32, all little-endian.
//         Invalid pixels carry 1e9 in both components.
//   .pfm  Portable float map ("Pf" 1 channel / "PF" 3 channels); a negative
//         scale means little-endian; rows are stored bottom-to-top.
//   .png  8- or 16-bit gray / RGB via libpng.
//   LiDAR binary float32 (x, y, z, intensity) records, or ASCII "x y z" lines.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "xmflow/core.hpp"
#include "xmflow/losses.hpp"

namespace xmflow {

inline constexpr float kFloMagic = 202021.25f;
inline constexpr float kFloInvalid = 1e9f;

std::vector<unsigned char> encode_flo(const FlowField& flow);
FlowField decode_flo(std::span<const unsigned char> bytes);
void write_flo(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flo(const std::filesystem::path& path);

FeatureMap read_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const FeatureMap& map);
/// Single-channel PFM as depth; non-finite / non-positive entries are invalid.
DepthMap read_depth_pfm(const std::filesystem::path& path);
void write_depth_pfm(const std::filesystem::path& path, const DepthMap& depth);

struct PngImage {
  ImageBuffer image;
  int bit_depth = 8;
};
PngImage read_png(const std::filesystem::path& path);
/// Quantizes [0,1] values to the given bit depth (8 or 16) with rounding.
void write_png(const std::filesystem::path& path, const ImageBuffer& image, int bit_depth = 8);
/// 1-channel 8-bit, 255 where set.
void write_mask_png(const std::filesystem::path& path, const Mask& mask);
Mask read_mask_png(const std::filesystem::path& path);

struct LidarPoint {
  double x = 0.0, y = 0.0, z = 0.0;
  double intensity = 0.0;
};
/// Binary when the file size is a multiple of 16 and the extension is .bin,
/// ASCII otherwise.
std::vector<LidarPoint> read_lidar(const std::filesystem::path& path);
void write_lidar_bin(const std::filesystem::path& path, std::span<const LidarPoint> points);

std::vector<unsigned char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes);

}  // namespace xmflow
