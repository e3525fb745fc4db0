#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tssi/tensor/parameter.hpp"

namespace tssi {

// Layout (all integers and doubles little-endian):
//   magic "TSSICKPT" | u32 version | u32 meta length | meta JSON bytes |
//   u32 record count | records...
// record: u32 name length | name | u8 trainable | u32 rank | u64 dims[rank] |
//   f64 values[product(dims)]
inline constexpr std::array<char, 8> kCheckpointMagic{'T', 'S', 'S', 'I', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointRecord {
  std::string name;
  bool trainable = true;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<CheckpointRecord> records;
};

namespace detail {

template <typename U>
void put_le(std::ostream& os, U value) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_le(std::istream& is) {
  unsigned char bytes[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw CheckpointError("checkpoint: truncated file");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

inline std::string get_bytes(std::istream& is, std::size_t n) {
  std::string s(n, '\0');
  if (n != 0 && !is.read(s.data(), static_cast<std::streamsize>(n))) {
    throw CheckpointError("checkpoint: truncated file");
  }
  return s;
}

}  // namespace detail

inline void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("checkpoint: cannot open " + path + " for writing");
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_le<std::uint32_t>(os, kCheckpointVersion);
  const std::string meta = ckpt.meta.dump();
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(meta.size()));
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.records.size()));
  for (const auto& r : ckpt.records) {
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    detail::put_le<std::uint8_t>(os, r.trainable ? 1 : 0);
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) detail::put_le<std::uint64_t>(os, d);
    for (double v : r.values) detail::put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw CheckpointError("checkpoint: write failed for " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("checkpoint: cannot open " + path);
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw CheckpointError("checkpoint: bad magic in " + path);
  }
  const auto version = detail::get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.meta = nlohmann::json::parse(detail::get_bytes(is, detail::get_le<std::uint32_t>(is)));
  const auto count = detail::get_le<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointRecord r;
    r.name = detail::get_bytes(is, detail::get_le<std::uint32_t>(is));
    r.trainable = detail::get_le<std::uint8_t>(is) != 0;
    const auto rank = detail::get_le<std::uint32_t>(is);
    for (std::uint32_t k = 0; k < rank; ++k) r.shape.push_back(detail::get_le<std::uint64_t>(is));
    r.values.resize(numel(r.shape));
    for (auto& v : r.values) v = std::bit_cast<double>(detail::get_le<std::uint64_t>(is));
    ckpt.records.push_back(std::move(r));
  }
  return ckpt;
}

inline Checkpoint snapshot(const ParameterStore& store, nlohmann::json meta = nlohmann::json::object()) {
  Checkpoint ckpt;
  ckpt.meta = std::move(meta);
  for (const auto& p : store.all()) {
    ckpt.records.push_back({p.name, p.trainable, p.tensor.shape(), p.tensor.values()});
  }
  return ckpt;
}

/// Copies checkpoint values into a store built with the same architecture.
inline void restore(const Checkpoint& ckpt, ParameterStore& store) {
  if (ckpt.records.size() != store.size()) {
    throw CheckpointError("checkpoint: " + std::to_string(ckpt.records.size()) + " records for a model with " +
                          std::to_string(store.size()) + " parameters");
  }
  for (const auto& r : ckpt.records) {
    const Parameter* p = store.find(r.name);
    if (p == nullptr) throw CheckpointError("checkpoint: unknown parameter " + r.name);
    if (p->tensor.shape() != r.shape) {
      throw CheckpointError("checkpoint: shape mismatch for " + r.name + ": " + shape_str(r.shape) + " vs " +
                            shape_str(p->tensor.shape()));
    }
    Tensor target = p->tensor;
    target.values() = r.values;
  }
}

}  // namespace tssi
