#include "ilic/checkpoint.h"

#include <fstream>
#include <iterator>

#include "ilic/bytes.h"

namespace ilic {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw Error("write failed: " + path);
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.str("ILIC");
  w.u16(kCheckpointVersion);
  w.u32(std::uint32_t(ckpt.config.size()));
  for (const auto& [k, v] : ckpt.config) {
    w.u32(std::uint32_t(k.size()));
    w.str(k);
    w.u32(std::uint32_t(v.size()));
    w.str(v);
  }
  w.u32(std::uint32_t(ckpt.records.size()));
  for (const auto& [name, t] : ckpt.records) {
    w.u32(std::uint32_t(name.size()));
    w.str(name);
    w.u32(std::uint32_t(t.rank()));
    for (auto e : t.shape()) w.u32(std::uint32_t(e));
    for (double v : t.data()) w.f64(v);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.str(4) != "ILIC") throw Error("not a checkpoint (bad magic)");
  const auto version = r.u16();
  if (version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto n_config = r.u32();
  for (std::uint32_t i = 0; i < n_config; ++i) {
    std::string key = r.str(r.u32());
    ckpt.config[key] = r.str(r.u32());
  }
  const auto n_records = r.u32();
  for (std::uint32_t i = 0; i < n_records; ++i) {
    std::string name = r.str(r.u32());
    const auto rank = r.u32();
    if (rank > 8) throw Error("checkpoint record '" + name + "' has implausible rank");
    Shape shape(rank);
    for (auto& e : shape) e = r.u32();
    const std::size_t n = numel(shape);
    if (n * 8 > r.remaining()) throw Error("checkpoint record '" + name + "' is truncated");
    std::vector<double> data(n);
    for (auto& v : data) v = r.f64();
    if (!ckpt.records.emplace(name, Tensor::from(shape, std::move(data))).second) {
      throw Error("duplicate checkpoint record '" + name + "'");
    }
  }
  if (r.remaining() != 0) throw Error("trailing bytes after checkpoint records");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  return deserialize_checkpoint(read_file(path));
}

}  // namespace ilic
