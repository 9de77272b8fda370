#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dpt/model.hpp"

namespace dpt {

// A checkpoint is a directory holding manifest.txt (key=value lines: the
// model config plus any extra entries) and one <param-name>.tensor blob per
// parameter. Blob layout, little-endian:
//   "LFT1", uint32 name length, name bytes, uint32 rank, uint32 extents,
//   float64 payload.
void save_checkpoint(const std::filesystem::path& dir, const DptModel& model,
                     const std::map<std::string, std::string>& extra = {});

// Rebuilds the model described by the manifest and restores its parameters.
DptModel load_checkpoint(const std::filesystem::path& dir);

// Restores parameters into `model`; throws ConfigError when the stored
// config differs from the model's.
void load_checkpoint_into(DptModel& model, const std::filesystem::path& dir);

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);
void write_key_values(const std::filesystem::path& path, const std::map<std::string, std::string>& kv);

std::vector<unsigned char> encode_tensor_blob(const std::string& name, const Tensor& t);
std::pair<std::string, Tensor> decode_tensor_blob(const std::vector<unsigned char>& bytes);

}  // namespace dpt
