#pragma once

#include <filesystem>

#include "stepnet/tensor.hpp"

namespace stepnet {

// Clip container: magic "SVT1", four u32 little-endian dims (T, C, H, W),
// then T*C*H*W f32 little-endian values, row-major with W innermost.
// File size is always 20 + 4*T*C*H*W bytes.
void write_clip(const std::filesystem::path& path, const Tensor<float>& clip);
Tensor<float> read_clip(const std::filesystem::path& path);

}  // namespace stepnet
