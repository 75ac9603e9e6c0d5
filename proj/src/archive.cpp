#include "angiogan/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "angiogan/errors.hpp"

namespace angiogan {
namespace {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

constexpr char kMagic[8] = {'A', 'G', 'A', 'N', 'A', 'R', 'C', '\0'};

nlohmann::json shape_json(const Shape& s) { return nlohmann::json::array({s.n, s.c, s.h, s.w}); }

Shape shape_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw LoadError("archive: malformed shape");
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>(), j[3].get<std::size_t>()};
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw LoadError("archive: truncated file");
  return v;
}

}  // namespace

void Archive::save(const std::filesystem::path& path) const {
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    const std::uint64_t size = t.size() * sizeof(double);
    index.push_back({{"name", name}, {"dtype", "f64"}, {"shape", shape_json(t.shape())}, {"offset", offset},
                     {"bytes", size}});
    offset += size;
  }
  for (const auto& [name, b] : bytes) {
    const std::uint64_t size = b.data.size();
    index.push_back({{"name", name}, {"dtype", "u8"}, {"shape", shape_json(b.shape)}, {"offset", offset},
                     {"bytes", size}});
    offset += size;
  }
  const nlohmann::json header = {{"meta", meta}, {"arrays", index}};
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof kMagic);
  write_pod(os, kVersion);
  write_pod(os, static_cast<std::uint64_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : tensors) {
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  for (const auto& [name, b] : bytes) {
    os.write(reinterpret_cast<const char*>(b.data.data()), static_cast<std::streamsize>(b.data.size()));
  }
  os.flush();
  if (!os) throw IoError("write failed for " + path.string());
}

Archive Archive::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open archive " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0) throw LoadError(path.string() + ": not an archive");
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kVersion) {
    throw LoadError(path.string() + ": unsupported archive version " + std::to_string(version));
  }
  const auto header_size = read_pod<std::uint64_t>(is);
  if (header_size > (std::uint64_t{1} << 32)) throw LoadError(path.string() + ": implausible header size");
  std::string text(header_size, '\0');
  is.read(text.data(), static_cast<std::streamsize>(header_size));
  if (!is) throw LoadError(path.string() + ": truncated header");

  Archive a;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    a.meta = header.at("meta");
    const auto payload_start = is.tellg();
    for (const auto& entry : header.at("arrays")) {
      const auto name = entry.at("name").get<std::string>();
      const auto dtype = entry.at("dtype").get<std::string>();
      const Shape shape = shape_from(entry.at("shape"));
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto size = entry.at("bytes").get<std::uint64_t>();
      is.seekg(payload_start + static_cast<std::streamoff>(offset));
      if (dtype == "f64") {
        if (size != shape.size() * sizeof(double)) throw LoadError("archive: size mismatch for " + name);
        std::vector<double> data(shape.size());
        is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(size));
        if (!is) throw LoadError(path.string() + ": truncated payload for " + name);
        a.tensors.emplace(name, Tensor(shape, std::move(data)));
      } else if (dtype == "u8") {
        if (size != shape.size()) throw LoadError("archive: size mismatch for " + name);
        ByteArray b{shape, std::vector<std::uint8_t>(size)};
        is.read(reinterpret_cast<char*>(b.data.data()), static_cast<std::streamsize>(size));
        if (!is) throw LoadError(path.string() + ": truncated payload for " + name);
        a.bytes.emplace(name, std::move(b));
      } else {
        throw LoadError("archive: unknown dtype " + dtype);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": corrupt header (" + e.what() + ")");
  }
  return a;
}

const Tensor& Archive::tensor(const std::string& name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw LoadError("archive has no array named " + name);
  return it->second;
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  std::uint64_t h = seed;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace angiogan
