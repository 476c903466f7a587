#include "paxl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "paxl/errors.hpp"
#include "paxl/hash.hpp"

namespace paxl {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

template <typename T>
void append_le(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T read_le(const std::string& in, std::size_t& off) {
  if (off + sizeof(T) > in.size()) throw CheckpointError("checkpoint: truncated stream");
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

std::string serialize_checkpoint(const NamedTensors& tensors) {
  std::string out;
  out.append(kCheckpointMagic, 4);
  append_le<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xffff) throw CheckpointError("checkpoint: tensor name too long");
    if (t->rank() > 0xff) throw CheckpointError("checkpoint: tensor rank too large");
    append_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.append(name);
    append_le<std::uint8_t>(out, static_cast<std::uint8_t>(t->rank()));
    for (auto d : t->shape) append_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (double v : t->values) append_le<double>(out, v);
  }
  append_le<std::uint64_t>(out, fnv1a64(out.data(), out.size()));
  return out;
}

NamedTensors deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 + 4 + 8) throw CheckpointError("checkpoint: stream too short");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw CheckpointError("checkpoint: bad magic bytes");

  const std::size_t payload = bytes.size() - 8;
  std::size_t off = payload;
  const auto stored = read_le<std::uint64_t>(bytes, off);
  const auto actual = fnv1a64(bytes.data(), payload);
  if (stored != actual) throw CheckpointError("checkpoint: checksum mismatch");

  off = 4;
  const auto version = read_le<std::uint32_t>(bytes, off);
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version));

  NamedTensors out;
  while (off < payload) {
    const auto name_len = read_le<std::uint16_t>(bytes, off);
    if (off + name_len > payload) throw CheckpointError("checkpoint: truncated name");
    std::string name(bytes.data() + off, name_len);
    off += name_len;
    const auto rank = read_le<std::uint8_t>(bytes, off);
    std::vector<std::size_t> shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(read_le<std::uint64_t>(bytes, off));
      count *= d;
    }
    std::vector<double> values(count);
    for (auto& v : values) v = read_le<double>(bytes, off);
    out.emplace(std::move(name), Tensor::make(std::move(shape), std::move(values)));
  }
  if (off != payload) throw CheckpointError("checkpoint: trailing bytes in tensor table");
  return out;
}

void save_checkpoint(const NamedTensors& tensors, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("checkpoint: cannot open for writing: " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("checkpoint: write failed: " + path.string());
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

std::uint64_t tensors_hash(const NamedTensors& tensors) {
  return fnv1a64(serialize_checkpoint(tensors));
}

}  // namespace paxl
