#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sbd/optim.hpp"

namespace sbd {

// SGCK layout, all integers u32 little-endian unless noted:
//   "SGCK" | version | kind length | kind bytes | iteration (u64)
//   | parameter count | records... | optimizer tensor count | records...
// record: name length | name bytes | rank | dims[rank] | f32 payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;  ///< "rpn", "unet3d/plain", "unet3d/mask3d", "unet3d/attention"
  std::uint64_t iteration = 0;
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> optimizer;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies of the parameter values, in order.
std::vector<NamedTensor> snapshot(const std::vector<Parameter>& params);

/// Copies checkpointed values into `params`. Every parameter must be present
/// with the same shape and no extra tensors may appear; otherwise
/// DimensionError names the offender.
void restore_parameters(const std::vector<Parameter>& params, const std::vector<NamedTensor>& saved);

}  // namespace sbd
