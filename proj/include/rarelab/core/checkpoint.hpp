#pragma once

// Checkpoint container:
//   bytes 0..7   magic "RLCKPT01"
//   bytes 8..15  header length H, little-endian uint64
//   next H bytes JSON header {"meta": {...}, "tensors": [{"name", "shape",
//                "frozen", "offset", "bytes"}, ...]}
//   remainder    little-endian float32 arrays in header order; offsets are
//                relative to the start of this section.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rarelab/core/autograd.hpp"
#include "rarelab/core/io.hpp"

namespace rarelab::core {

inline constexpr std::string_view kCheckpointMagic = "RLCKPT01";

struct CheckpointTensor {
  std::string name;
  Shape shape;
  bool frozen = false;
  std::vector<float> data;
};

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor& at(const std::string& name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return t;
    }
    throw ConfigError("checkpoint has no tensor named " + name);
  }
  bool contains(const std::string& name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return true;
    }
    return false;
  }
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["meta"] = ckpt.meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    if (shape_size(t.shape) != t.data.size()) {
      throw DimensionError("checkpoint tensor " + t.name + " does not fit its shape");
    }
    const std::uint64_t bytes = 4 * t.data.size();
    header["tensors"].push_back({{"name", t.name},
                                 {"shape", t.shape},
                                 {"frozen", t.frozen},
                                 {"offset", offset},
                                 {"bytes", bytes}});
    offset += bytes;
  }
  const std::string text = header.dump();
  std::string out(kCheckpointMagic);
  detail::put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& t : ckpt.tensors) {
    for (float f : t.data) {
      const auto bits = std::bit_cast<std::uint32_t>(f);
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }
  }
  return out;
}

inline Checkpoint parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, kCheckpointMagic.size(), kCheckpointMagic) != 0) {
    throw IoError("not a checkpoint container");
  }
  const std::uint64_t header_len = detail::get_u64(bytes, 8);
  if (16 + header_len > bytes.size()) throw IoError("truncated checkpoint header");
  const auto header = nlohmann::json::parse(bytes.substr(16, header_len));
  const std::size_t base = 16 + header_len;
  Checkpoint ckpt;
  ckpt.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("tensors")) {
    CheckpointTensor t;
    t.name = entry.at("name").get<std::string>();
    t.shape = entry.at("shape").get<Shape>();
    t.frozen = entry.at("frozen").get<bool>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const auto nbytes = entry.at("bytes").get<std::uint64_t>();
    if (nbytes != 4 * shape_size(t.shape) || base + offset + nbytes > bytes.size()) {
      throw IoError("checkpoint tensor " + t.name + " is truncated or mis-sized");
    }
    t.data.resize(nbytes / 4);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(
                    static_cast<unsigned char>(bytes[base + offset + 4 * i + b]))
                << (8 * b);
      }
      t.data[i] = std::bit_cast<float>(bits);
    }
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path));
}

template <typename Real>
void append_parameters(Checkpoint& ckpt, const std::vector<const Parameter<Real>*>& params) {
  for (const auto* p : params) {
    CheckpointTensor t;
    t.name = p->name();
    t.shape = p->value().shape();
    t.frozen = p->frozen();
    t.data.assign(p->value().values().begin(), p->value().values().end());
    ckpt.tensors.push_back(std::move(t));
  }
}

/// Fills parameters by name; shapes must match exactly.
template <typename Real>
void load_parameters(const Checkpoint& ckpt, const ParameterList<Real>& params,
                     bool restore_frozen_flags = false) {
  for (auto* p : params) {
    const auto& t = ckpt.at(p->name());
    if (t.shape != p->value().shape()) {
      throw DimensionError("checkpoint tensor " + t.name + " has shape " +
                           shape_string(t.shape) + ", expected " +
                           shape_string(p->value().shape()));
    }
    std::copy(t.data.begin(), t.data.end(), p->mutable_value().values().begin());
    if (restore_frozen_flags) p->set_frozen(t.frozen);
  }
}

}  // namespace rarelab::core
