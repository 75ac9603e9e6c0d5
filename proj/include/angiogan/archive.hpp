#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "angiogan/tensor.hpp"

namespace angiogan {

/// Versioned key -> array container used for checkpoints and sample caches.
///
/// Layout (little-endian):
///   8 bytes   magic "AGANARC\0"
///   u32       format version (currently 1)
///   u64       header length L
///   L bytes   UTF-8 JSON header: {"meta": {...}, "arrays": [{"name", "dtype",
///             "shape": [n, c, h, w], "offset", "bytes"}, ...]}
///   ...       array payloads, f64 or u8, in header order
///
/// Entries are written in key order and the JSON header is dumped
/// deterministically, so save -> load -> save is byte-identical.
class Archive {
 public:
  static constexpr std::uint32_t kVersion = 1;

  struct ByteArray {
    Shape shape;
    std::vector<std::uint8_t> data;
  };

  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, Tensor> tensors;
  std::map<std::string, ByteArray> bytes;

  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

  const Tensor& tensor(const std::string& name) const;
};

/// FNV-1a 64-bit, used for manifest and dataset fingerprints.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace angiogan
