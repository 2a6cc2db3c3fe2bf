#pragma once

#include "metascript/layers.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <map>

namespace metascript {

// Single-file archive: "MSCK" magic, u32 version, u64 JSON header length,
// JSON header (config snapshot, iteration, tensor directory), then raw
// little-endian float32 blobs. float32 storage makes the save/load round
// trip bitwise for training dtype.
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename S>
void save_checkpoint(const std::string& path, const nlohmann::json& config, long iteration,
                     const std::vector<std::pair<std::string, ParamList<S>>>& groups) {
  nlohmann::json header;
  header["format"] = kCheckpointVersion;
  header["config"] = config;
  header["iteration"] = iteration;
  nlohmann::json dir = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [prefix, params] : groups)
    for (const auto& p : params) {
      nlohmann::json t;
      t["name"] = prefix + "/" + p.name;
      std::vector<Index> dims;
      for (int i = 0; i < p.tensor.shape().ndim(); ++i) dims.push_back(p.tensor.shape()[i]);
      t["shape"] = dims;
      t["dtype"] = "f32";
      t["offset"] = offset;
      t["bytes"] = static_cast<std::uint64_t>(p.tensor.numel()) * 4;
      offset += static_cast<std::uint64_t>(p.tensor.numel()) * 4;
      dir.push_back(t);
    }
  header["tensors"] = dir;
  std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path);
  f.write("MSCK", 4);
  std::uint32_t ver = kCheckpointVersion;
  f.write(reinterpret_cast<const char*>(&ver), 4);
  std::uint64_t hl = hs.size();
  f.write(reinterpret_cast<const char*>(&hl), 8);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [prefix, params] : groups)
    for (const auto& p : params)
      for (Index i = 0; i < p.tensor.numel(); ++i) {
        float v = static_cast<float>(p.tensor.value()[i]);
        f.write(reinterpret_cast<const char*>(&v), 4);
      }
  if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

class Checkpoint {
 public:
  explicit Checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint " + path);
    char magic[4];
    f.read(magic, 4);
    if (f.gcount() != 4 || std::memcmp(magic, "MSCK", 4) != 0)
      throw std::runtime_error("not a checkpoint file: " + path);
    std::uint32_t ver = 0;
    f.read(reinterpret_cast<char*>(&ver), 4);
    if (ver != kCheckpointVersion)
      throw std::runtime_error("unsupported checkpoint version " + std::to_string(ver));
    std::uint64_t hl = 0;
    f.read(reinterpret_cast<char*>(&hl), 8);
    std::string hs(hl, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hl));
    if (!f) throw std::runtime_error("truncated checkpoint header: " + path);
    header_ = nlohmann::json::parse(hs);
    std::streampos payload = f.tellg();
    for (const auto& t : header_.at("tensors")) {
      Blob b;
      b.shape = t.at("shape").get<std::vector<Index>>();
      std::uint64_t off = t.at("offset").get<std::uint64_t>();
      std::uint64_t bytes = t.at("bytes").get<std::uint64_t>();
      b.values.resize(bytes / 4);
      f.seekg(payload + static_cast<std::streamoff>(off));
      f.read(reinterpret_cast<char*>(b.values.data()), static_cast<std::streamsize>(bytes));
      if (!f) throw std::runtime_error("truncated checkpoint payload: " + path);
      blobs_[t.at("name").get<std::string>()] = std::move(b);
    }
  }

  const nlohmann::json& config() const { return header_.at("config"); }
  long iteration() const { return header_.at("iteration").get<long>(); }
  bool has_group(const std::string& prefix) const {
    for (const auto& [name, b] : blobs_)
      if (name.rfind(prefix + "/", 0) == 0) return true;
    return false;
  }

  // fill a parameter list, checking names and shapes
  template <typename S>
  void load_into(const std::string& prefix, ParamList<S>& params) const {
    for (auto& p : params) {
      auto it = blobs_.find(prefix + "/" + p.name);
      if (it == blobs_.end())
        throw std::runtime_error("checkpoint is missing tensor " + prefix + "/" + p.name);
      const Blob& b = it->second;
      if (Shape(b.shape) != p.tensor.shape())
        throw std::runtime_error("checkpoint shape mismatch for " + p.name + ": stored " +
                                 Shape(b.shape).str() + " vs model " + p.tensor.shape().str());
      for (Index i = 0; i < p.tensor.numel(); ++i)
        p.tensor.value()[i] = static_cast<S>(b.values[static_cast<size_t>(i)]);
    }
  }

 private:
  struct Blob {
    std::vector<Index> shape;
    std::vector<float> values;
  };
  nlohmann::json header_;
  std::map<std::string, Blob> blobs_;
};

}  // namespace metascript
