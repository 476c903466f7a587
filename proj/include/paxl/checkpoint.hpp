#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "paxl/tensor.hpp"

namespace paxl {

// Sorted so serialization order is canonical.
using NamedTensors = std::map<std::string, TensorPtr>;

inline constexpr char kCheckpointMagic[4] = {'P', 'A', 'X', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout (all integers little-endian):
//   magic "PAXL" | u32 version | per tensor: u16 name length, UTF-8 name,
//   u8 rank, rank x u64 dims, product x f64 values | u64 FNV-1a checksum
//   over all preceding bytes.
std::string serialize_checkpoint(const NamedTensors& tensors);
NamedTensors deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const NamedTensors& tensors, const std::filesystem::path& path);
NamedTensors load_checkpoint(const std::filesystem::path& path);

// FNV-1a over the serialized tensor table; used for frozen-parameter checks.
std::uint64_t tensors_hash(const NamedTensors& tensors);

}  // namespace paxl
