#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sbd/volume.hpp"

namespace sbd {

// SVOL layout: "SVOL", then D, H, W as u32 little-endian, then D*H*W
// little-endian IEEE-754 floats in (d, y, x) row-major order.
inline constexpr std::size_t kSvolHeaderBytes = 16;

std::vector<std::uint8_t> encode_svol(const Volume& v);
/// Throws FormatError (bad magic, zero or oversized dims, truncation,
/// trailing bytes) naming the offending byte offset.
Volume decode_svol(std::span<const std::uint8_t> bytes);

void write_svol(const std::filesystem::path& path, const Volume& v);
Volume read_svol(const std::filesystem::path& path);

}  // namespace sbd
