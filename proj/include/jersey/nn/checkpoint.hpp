#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "jersey/error.hpp"
#include "jersey/nn/model.hpp"

// Checkpoint layout:
//   8 bytes   magic "JRSYCKPT"
//   u32 LE    format version
//   u64 LE    header length
//   header    JSON: {"config", "metadata", "tensors": [{"name", "shape", "offset", "count"}]}
//   payload   float32 little-endian values, tensors back to back

namespace jersey::nn {

inline constexpr char kCheckpointMagic[8] = {'J', 'R', 'S', 'Y', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct Checkpoint {
  Model<float> model;
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
};

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  header["config"] = ckpt.model.config.to_json();
  header["metadata"] = ckpt.metadata;
  header["tensors"] = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.model.params.tensors) {
    header["tensors"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.size()}});
    offset += t.size();
  }
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::IoError, "cannot write checkpoint " + path.string());
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t length = text.size();
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  os.write(reinterpret_cast<const char*>(&version), sizeof(version));
  os.write(reinterpret_cast<const char*>(&length), sizeof(length));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : ckpt.model.params.tensors) {
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!os) throw Error(Errc::IoError, "write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::FileNotFound, path.string());
  char magic[8] = {};
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  is.read(magic, sizeof(magic));
  is.read(reinterpret_cast<char*>(&version), sizeof(version));
  is.read(reinterpret_cast<char*>(&length), sizeof(length));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw Error(Errc::DecodeError, path.string() + " is not a checkpoint");
  }
  if (version != kCheckpointVersion) {
    throw Error(Errc::DecodeError, "unsupported checkpoint version " + std::to_string(version));
  }
  if (length > (std::uint64_t{1} << 30)) throw Error(Errc::DecodeError, "checkpoint header too large");
  std::string text(length, '\0');
  is.read(text.data(), static_cast<std::streamsize>(length));
  if (!is) throw Error(Errc::DecodeError, "truncated checkpoint header");

  Checkpoint ckpt;
  try {
    const auto header = nlohmann::ordered_json::parse(text);
    ckpt.model.config = CnnConfig::from_json(header.at("config"));
    ckpt.metadata = header.value("metadata", nlohmann::ordered_json::object());
    for (const auto& entry : header.at("tensors")) {
      Tensor<float> t(entry.at("shape").get<Shape>());
      if (t.size() != entry.at("count").get<std::size_t>()) throw std::invalid_argument("tensor count mismatch");
      is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
      if (!is) throw std::invalid_argument("truncated tensor payload");
      ckpt.model.params.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(Errc::DecodeError, path.string() + ": " + e.what());
  }
  const auto expected = init_params<float>(ckpt.model.config);
  for (const auto& [name, t] : expected.tensors) {
    const auto it = ckpt.model.params.tensors.find(name);
    if (it == ckpt.model.params.tensors.end() || it->second.shape() != t.shape()) {
      throw Error(Errc::ShapeMismatch, "checkpoint tensor " + name + " missing or mis-shaped");
    }
  }
  return ckpt;
}

}  // namespace jersey::nn
