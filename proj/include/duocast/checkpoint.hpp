#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "duocast/tensor.hpp"

namespace duocast {

// DUOC container, integers little-endian:
//   "DUOC" | u16 version | u32 epoch | u32 config_len | config (UTF-8)
//   | u32 tensor_count | records sorted by name:
//     u32 name_len | name | u32 rank | u32 dims[rank] | float32 payload
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint16_t version = kCheckpointVersion;
  std::uint32_t epoch = 0;
  std::string config;
  std::map<std::string, Tensor<float>> tensors;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace duocast
