#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bleg/numerics/tape.hpp"

namespace bleg::numerics {

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Binary checkpoint layout (little-endian):
///   "BLEGCKPT" | u32 version | u32 count |
///   count x { u32 name_len | name | u32 rank | u64 dims[rank] | f64 values[] }
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<char> encode_checkpoint(std::span<const NamedTensor> tensors);
std::vector<NamedTensor> decode_checkpoint(std::span<const char> bytes);

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Snapshot of every parameter (buffers included) across the given sets.
std::vector<NamedTensor> collect_parameters(std::span<const ParameterSet* const> sets);
/// Restores values by name; every parameter of every set must be present.
void restore_parameters(std::span<ParameterSet* const> sets, std::span<const NamedTensor> tensors);

}  // namespace bleg::numerics
