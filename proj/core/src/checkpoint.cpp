#include "manigan/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "manigan/errors.hpp"

namespace manigan {
namespace {

constexpr char kMagic[4] = {'M', 'G', 'A', 'N'};

void write_u32(std::ostream& out, uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 4);
}

void write_f32(std::ostream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

void write_f64(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t read_u32(std::istream& in) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw IoError("checkpoint: unexpected end of file");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[i]) << (8 * i);
  return v;
}

float read_f32(std::istream& in) {
  uint32_t bits = read_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

double read_f64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw IoError("checkpoint: unexpected end of file");
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(buf[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string read_string(std::istream& in) {
  uint32_t len = read_u32(in);
  if (len > (1u << 20)) throw IoError("checkpoint: implausible string length");
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw IoError("checkpoint: unexpected end of file");
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kMagic, 4);
  write_u32(out, kCheckpointVersion);
  write_u32(out, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    write_string(out, name);
    write_u32(out, static_cast<uint32_t>(tensor.ndim()));
    for (int d = 0; d < tensor.ndim(); ++d)
      write_u32(out, static_cast<uint32_t>(tensor.dim(d)));
    for (float v : tensor.data()) write_f32(out, v);
  }
  write_string(out, ckpt.phase);
  write_u32(out, ckpt.epoch);
  write_u32(out, static_cast<uint32_t>(ckpt.mp_history.size()));
  for (double v : ckpt.mp_history) write_f64(out, v);
  if (!out) throw IoError("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError(path + ": bad magic");
  uint32_t version = read_u32(in);
  if (version != kCheckpointVersion)
    throw IoError(path + ": unsupported checkpoint version " +
                  std::to_string(version));

  Checkpoint ckpt;
  uint32_t count = read_u32(in);
  ckpt.tensors.reserve(count);
  for (uint32_t t = 0; t < count; ++t) {
    std::string name = read_string(in);
    uint32_t ndim = read_u32(in);
    if (ndim > 8) throw IoError(path + ": implausible tensor rank");
    Shape shape(ndim);
    size_t size = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      shape[d] = static_cast<int>(read_u32(in));
      size *= static_cast<size_t>(shape[d]);
    }
    std::vector<float> data(size);
    for (size_t i = 0; i < size; ++i) data[i] = read_f32(in);
    ckpt.tensors.emplace_back(std::move(name),
                              Tensor::from_data(shape, std::move(data), false));
  }
  ckpt.phase = read_string(in);
  ckpt.epoch = read_u32(in);
  uint32_t n_mp = read_u32(in);
  ckpt.mp_history.resize(n_mp);
  for (uint32_t i = 0; i < n_mp; ++i) ckpt.mp_history[i] = read_f64(in);
  return ckpt;
}

void restore_tensors(const Checkpoint& ckpt,
                     const std::vector<std::pair<std::string, Tensor>>& targets) {
  std::unordered_map<std::string, const Tensor*> stored;
  for (const auto& [name, tensor] : ckpt.tensors) stored[name] = &tensor;
  for (const auto& [name, target] : targets) {
    auto it = stored.find(name);
    if (it == stored.end())
      throw IoError("checkpoint is missing tensor " + name);
    const Tensor& source = *it->second;
    if (source.shape() != target.shape())
      throw IoError("checkpoint tensor " + name + " has a mismatched shape");
    Tensor t = target;
    std::copy(source.data().begin(), source.data().end(), t.raw().begin());
  }
}

}  // namespace manigan
