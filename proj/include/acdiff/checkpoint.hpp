#pragma once

// Binary checkpoint layout (all integers little-endian):
//   "ACDF"  u32 version  u32 config_len  config text
//   u32 tensor_count
//   per tensor: u32 name_len  name  u32 rank  u64 dims[rank]  f32 values[prod(dims)]
//   u32 CRC-32 of every preceding byte

#include "acdiff/config.hpp"
#include "acdiff/diffusion.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace acdiff {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  Model model;
};

std::vector<unsigned char> encode_checkpoint(const RunConfig& config, const Model& model);
/// Throws FormatError on bad magic/version, CRC mismatch, truncation or a
/// missing, duplicated, unknown or mis-shaped tensor.
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const Model& model);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace acdiff
