#include "sbd/svol.hpp"

#include <limits>

#include "sbd/binary_io.hpp"
#include "sbd/error.hpp"

namespace sbd {

std::vector<std::uint8_t> encode_svol(const Volume& v) {
  if (v.dims.d <= 0 || v.dims.h <= 0 || v.dims.w <= 0 ||
      static_cast<std::int64_t>(v.data.size()) != v.dims.size()) {
    throw DimensionError("cannot encode volume with inconsistent dims");
  }
  io::ByteWriter w;
  w.bytes("SVOL");
  w.u32(static_cast<std::uint32_t>(v.dims.d));
  w.u32(static_cast<std::uint32_t>(v.dims.h));
  w.u32(static_cast<std::uint32_t>(v.dims.w));
  for (float f : v.data) w.f32(f);
  return w.take();
}

Volume decode_svol(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("SVOL");
  std::uint32_t ext[3];
  for (auto& e : ext) {
    const auto at = r.offset();
    e = r.u32("dimension");
    if (e == 0 || e > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
      throw FormatError("invalid dimension " + std::to_string(e), at);
    }
  }
  const std::uint64_t count = std::uint64_t{ext[0]} * ext[1] * ext[2];
  if (count > r.remaining() / 4) {
    // Either the dims overflow any plausible payload or the file is cut short.
    throw FormatError("payload of " + std::to_string(count) + " floats exceeds the " +
                          std::to_string(r.remaining()) + " bytes available",
                      bytes.size());
  }
  Volume v(Dims{static_cast<int>(ext[0]), static_cast<int>(ext[1]), static_cast<int>(ext[2])});
  for (auto& f : v.data) f = r.f32("voxel");
  if (r.remaining() != 0) throw FormatError("trailing bytes after voxel payload", r.offset());
  return v;
}

void write_svol(const std::filesystem::path& path, const Volume& v) { io::write_file(path, encode_svol(v)); }

Volume read_svol(const std::filesystem::path& path) {
  return decode_svol(io::read_file(path));
}

}  // namespace sbd
