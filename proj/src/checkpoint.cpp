#include "duocast/checkpoint.hpp"

#include <cmath>
#include <cstring>

#include "duocast/io.hpp"

namespace duocast {

namespace {

constexpr std::uint32_t kMaxRank = 8;

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  ByteWriter w;
  w.bytes("DUOC", 4);
  w.u16(ck.version);
  w.u32(ck.epoch);
  w.u32(static_cast<std::uint32_t>(ck.config.size()));
  w.bytes(ck.config.data(), ck.config.size());
  w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    require(!name.empty(), "checkpoint: empty tensor name");
    require(t.rank() >= 1 && static_cast<std::uint32_t>(t.rank()) <= kMaxRank, "checkpoint: bad rank for " + name);
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.values()) {
      require(std::isfinite(v), "checkpoint: refusing to save non-finite value in " + name);
      w.f32(v);
    }
  }
  return std::move(w.buffer());
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "DUOC", 4) != 0) throw FormatError("bad DUOC magic", 0);
  ByteReader r(bytes);
  r.str(4, "magic");
  Checkpoint ck;
  const std::size_t version_at = r.offset();
  ck.version = r.u16("header");
  if (ck.version != kCheckpointVersion)
    throw FormatError("unsupported DUOC version " + std::to_string(ck.version), version_at);
  ck.epoch = r.u32("header");
  const std::uint32_t config_len = r.u32("header");
  ck.config = r.str(config_len, "config block");
  const std::uint32_t count = r.u32("tensor count");
  std::string previous;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t record_at = r.offset();
    const std::uint32_t name_len = r.u32("tensor record");
    if (name_len == 0) throw FormatError("empty tensor name", record_at);
    std::string name = r.str(name_len, "tensor name");
    if (i > 0 && !(previous < name)) throw FormatError("tensor records not in strictly sorted order", record_at);
    const std::size_t rank_at = r.offset();
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank == 0 || rank > kMaxRank) throw FormatError("bad tensor rank " + std::to_string(rank), rank_at);
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::size_t dim_at = r.offset();
      const std::uint32_t dim = r.u32("tensor dims");
      if (dim == 0 || dim > 0x7fffffffu) throw FormatError("bad tensor dimension", dim_at);
      numel *= dim;
      if (numel > (std::uint64_t{1} << 40)) throw FormatError("tensor shape overflow", dim_at);
      shape.push_back(static_cast<int>(dim));
    }
    r.need(numel * 4, "tensor payload");
    std::vector<float> data(numel);
    for (float& v : data) {
      const std::size_t at = r.offset();
      v = r.f32("tensor payload");
      if (!std::isfinite(v)) throw FormatError("non-finite value in tensor " + name, at);
    }
    ck.tensors.emplace(name, Tensor<float>(std::move(shape), std::move(data)));
    previous = std::move(name);
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint records", r.offset());
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) { write_file_bytes(path, encode_checkpoint(ck)); }

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace duocast
