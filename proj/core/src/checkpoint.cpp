#include "sbd/checkpoint.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "sbd/binary_io.hpp"
#include "sbd/error.hpp"

namespace sbd {

namespace {

constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint32_t kMaxNameLength = 4096;

void write_record(io::ByteWriter& w, const NamedTensor& t) {
  w.u32(static_cast<std::uint32_t>(t.name.size()));
  w.bytes(t.name);
  w.u32(static_cast<std::uint32_t>(t.tensor.rank()));
  for (auto e : t.tensor.shape()) w.u32(static_cast<std::uint32_t>(e));
  for (float f : t.tensor.data()) w.f32(f);
}

NamedTensor read_record(io::ByteReader& r) {
  NamedTensor t;
  auto at = r.offset();
  const auto name_len = r.u32("tensor name length");
  if (name_len > kMaxNameLength) throw FormatError("tensor name length " + std::to_string(name_len) + " too large", at);
  t.name = r.bytes(name_len, "tensor name");
  at = r.offset();
  const auto rank = r.u32("tensor rank");
  if (rank == 0 || rank > kMaxRank) throw FormatError("tensor rank " + std::to_string(rank) + " out of range", at);
  Shape shape;
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    at = r.offset();
    const auto e = r.u32("tensor extent");
    if (e == 0) throw FormatError("zero tensor extent", at);
    count *= e;
    if (count > r.remaining() / 4 + 1) throw FormatError("tensor '" + t.name + "' larger than the file", at);
    shape.push_back(e);
  }
  if (count * 4 > r.remaining()) throw FormatError("truncated payload of tensor '" + t.name + "'", r.offset());
  std::vector<float> data(count);
  for (auto& f : data) f = r.f32("tensor payload");
  t.tensor = Tensor::from_data(std::move(shape), std::move(data));
  return t;
}

std::vector<NamedTensor> read_records(io::ByteReader& r, const char* what) {
  const auto at = r.offset();
  const auto n = r.u32(what);
  // Each record takes at least 16 bytes.
  if (n > r.remaining() / 16) throw FormatError(std::string(what) + " " + std::to_string(n) + " exceeds file size", at);
  std::vector<NamedTensor> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(read_record(r));
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  io::ByteWriter w;
  w.bytes("SGCK");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.kind.size()));
  w.bytes(ckpt.kind);
  w.u64(ckpt.iteration);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& t : ckpt.params) write_record(w, t);
  w.u32(static_cast<std::uint32_t>(ckpt.optimizer.size()));
  for (const auto& t : ckpt.optimizer) write_record(w, t);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("SGCK");
  auto at = r.offset();
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version), at);
  Checkpoint c;
  at = r.offset();
  const auto kind_len = r.u32("kind length");
  if (kind_len > kMaxNameLength) throw FormatError("kind length too large", at);
  c.kind = r.bytes(kind_len, "kind");
  c.iteration = r.u64("iteration");
  c.params = read_records(r, "parameter count");
  c.optimizer = read_records(r, "optimizer tensor count");
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint", r.offset());
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

std::vector<NamedTensor> snapshot(const std::vector<Parameter>& params) {
  std::vector<NamedTensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back({p.name, p.value.detach()});
  return out;
}

void restore_parameters(const std::vector<Parameter>& params, const std::vector<NamedTensor>& saved) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& s : saved) by_name[s.name] = &s.tensor;
  std::set<std::string> expected;
  for (const auto& p : params) expected.insert(p.name);
  for (const auto& [name, tensor] : by_name) {
    if (!expected.count(name)) throw DimensionError("checkpoint holds unexpected tensor '" + name + "'");
  }
  for (const auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw DimensionError("checkpoint lacks parameter '" + p.name + "'");
    if (it->second->shape() != p.value.shape()) {
      throw DimensionError("parameter '" + p.name + "' has shape " + shape_str(it->second->shape()) +
                           " in the checkpoint but " + shape_str(p.value.shape()) + " in the configured model");
    }
  }
  for (const auto& p : params) {
    auto src = by_name.at(p.name)->data();
    Tensor dst = p.value;
    std::copy(src.begin(), src.end(), dst.data().begin());
  }
}

}  // namespace sbd
