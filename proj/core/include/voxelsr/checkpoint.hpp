#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "voxelsr/model.hpp"

namespace voxelsr {

// MDL1 layout (little-endian): magic "MDL1", u32 tensor count, then per
// tensor u32 name length, UTF-8 name, u32 rank, rank x u32 dims; followed by
// the f32 payloads in manifest order.
std::vector<std::byte> encode_model(const ModelParams<float>& params);
ModelParams<float> decode_model(std::span<const std::byte> bytes);

void save_model(const ModelParams<float>& params, const std::filesystem::path& path);
ModelParams<float> load_model(const std::filesystem::path& path);

}  // namespace voxelsr
