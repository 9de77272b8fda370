#pragma once

#include <filesystem>
#include <vector>

#include "dpt/lightfield.hpp"

namespace dpt {

// LFR1 container, little-endian:
//   bytes 0..3   "LFR1"
//   bytes 4..23  uint32 U, V, C, H, W
//   then U*V*C*H*W float32 samples in [u][v][c][h][w] order.
// Values are narrowed to float32 on write.
void write_lfr(const std::filesystem::path& path, const LightField& lf);
LightField read_lfr(const std::filesystem::path& path);

std::vector<unsigned char> encode_lfr(const LightField& lf);
LightField decode_lfr(const std::vector<unsigned char>& bytes);

// One 16-bit binary PGM per view of a single-channel field, named
// sai_u{u}_v{v}.pgm. Samples are round(x * 65535), clamped to [0, 65535].
std::vector<std::filesystem::path> export_pgm(const LightField& lf, const std::filesystem::path& dir);
// Reads a P5 image back as a [1 x H x W] tensor scaled to [0, 1].
Tensor read_pgm(const std::filesystem::path& path);

}  // namespace dpt
