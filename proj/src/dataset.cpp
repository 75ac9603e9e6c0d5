#include "angiogan/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "angiogan/archive.hpp"
#include "angiogan/errors.hpp"

namespace angiogan {
namespace fs = std::filesystem;

namespace {

constexpr const char* kExtensions[] = {".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp"};

std::optional<fs::path> find_stem(const fs::path& dir, const std::string& stem) {
  for (const char* ext : kExtensions) {
    fs::path p = dir / (stem + ext);
    if (fs::exists(p)) return p;
  }
  return std::nullopt;
}

void check_window(const SourcePair& pair, std::size_t size) {
  if (size == 0) throw InputError("crop size must be positive");
  if (size > pair.height() || size > pair.width()) {
    throw InputError("crop size " + std::to_string(size) + " exceeds " + std::to_string(pair.height()) + "x" +
                     std::to_string(pair.width()) + " source " + pair.pair_id);
  }
}

PairedSample sample_at(const SourcePair& pair, CropOffset offset, std::size_t size) {
  return {pair.pair_id, offset, size, pair.fundus, pair.angiogram};
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestionError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

Tensor normalize_crop(const Image8& image, CropOffset offset, std::size_t size) {
  if (offset.row + size > image.height || offset.col + size > image.width) {
    throw InputError("crop window leaves the image");
  }
  Tensor t({1, image.channels, size, size});
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        t.at(0, c, y, x) = image.at(offset.row + y, offset.col + x, c) / 127.5 - 1.0;
  return t;
}

Tensor normalize(const Image8& image) {
  Tensor t({1, image.channels, image.height, image.width});
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t y = 0; y < image.height; ++y)
      for (std::size_t x = 0; x < image.width; ++x) t.at(0, c, y, x) = image.at(y, x, c) / 127.5 - 1.0;
  return t;
}

Image8 denormalize(const Tensor& t) {
  const Shape s = t.shape();
  if (s.n != 1) throw InputError("denormalize expects a single image, got " + s.str());
  Image8 out(s.h, s.w, s.c);
  for (std::size_t c = 0; c < s.c; ++c)
    for (std::size_t y = 0; y < s.h; ++y)
      for (std::size_t x = 0; x < s.w; ++x) {
        const double v = std::round((t.at(0, c, y, x) + 1.0) * 127.5);
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
  return out;
}

Tensor PairedSample::fundus_crop() const { return normalize_crop(*fundus_source, offset, size); }
Tensor PairedSample::angio_crop() const { return normalize_crop(*angio_source, offset, size); }

SourcePair make_pair(std::string pair_id, Image8 fundus, Image8 angiogram) {
  if (fundus.channels != 3) throw IngestionError(pair_id + ": fundus must have 3 channels");
  if (angiogram.channels != 1) throw IngestionError(pair_id + ": angiogram must have 1 channel");
  if (fundus.height != angiogram.height || fundus.width != angiogram.width) {
    throw IngestionError(pair_id + ": fundus is " + std::to_string(fundus.height) + "x" +
                         std::to_string(fundus.width) + " but angiogram is " + std::to_string(angiogram.height) +
                         "x" + std::to_string(angiogram.width));
  }
  SourcePair p;
  p.pair_id = std::move(pair_id);
  p.fundus = std::make_shared<const Image8>(std::move(fundus));
  p.angiogram = std::make_shared<const Image8>(std::move(angiogram));
  return p;
}

std::vector<SourcePair> load_pairs(const fs::path& root, const std::optional<std::string>& split,
                                   const fs::path& manifest) {
  const fs::path manifest_path = manifest.empty() ? root / "manifest.json" : manifest;
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(manifest_path.string() + ": " + e.what());
  }
  const nlohmann::json& entries = parsed.is_array() ? parsed : parsed.value("pairs", nlohmann::json::array());
  if (!entries.is_array()) throw IngestionError(manifest_path.string() + ": \"pairs\" must be a list");

  std::vector<SourcePair> pairs;
  for (const auto& entry : entries) {
    std::string id;
    std::string entry_split = "train";
    bool aligned = true;
    if (entry.is_string()) {
      id = entry.get<std::string>();
    } else if (entry.is_object() && entry.contains("id")) {
      id = entry.at("id").get<std::string>();
      entry_split = entry.value("split", entry_split);
      aligned = entry.value("aligned", true);
    } else {
      throw IngestionError(manifest_path.string() + ": malformed entry " + entry.dump());
    }
    if (!aligned) continue;
    if (split && entry_split != *split) continue;

    const auto fundus_path = find_stem(root / "fundus", id);
    const auto angio_path = find_stem(root / "angio", id);
    if (!fundus_path) throw IngestionError("missing fundus image for pair " + id);
    if (!angio_path) throw IngestionError("missing angiogram for pair " + id);
    SourcePair p = make_pair(id, read_image(*fundus_path, 3), read_image(*angio_path, 1));
    p.split = entry_split;
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) std::cerr << "warning: manifest " << manifest_path.string() << " selects no pairs\n";
  return pairs;
}

std::string manifest_hash(const fs::path& root, const fs::path& manifest) {
  const std::string text = read_file(manifest.empty() ? root / "manifest.json" : manifest);
  return hex64(fnv1a64(text.data(), text.size()));
}

std::vector<PairedSample> random_crops(const SourcePair& pair, std::size_t n, std::size_t size, std::uint64_t seed) {
  check_window(pair, size);
  const std::uint64_t id_hash = fnv1a64(pair.pair_id.data(), pair.pair_id.size());
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id_hash), static_cast<std::uint32_t>(id_hash >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<std::size_t> rows(0, pair.height() - size);
  std::uniform_int_distribution<std::size_t> cols(0, pair.width() - size);
  std::vector<PairedSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = rows(rng);
    const std::size_t c = cols(rng);
    out.push_back(sample_at(pair, {r, c}, size));
  }
  return out;
}

std::vector<PairedSample> build_training_set(const std::vector<SourcePair>& pairs, std::size_t n, std::size_t size,
                                             std::uint64_t seed) {
  std::vector<PairedSample> out;
  out.reserve(pairs.size() * n);
  for (const auto& p : pairs) {
    auto crops = random_crops(p, n, size, seed);
    std::move(crops.begin(), crops.end(), std::back_inserter(out));
  }
  return out;
}

std::vector<PairedSample> eval_quadrant_crops(const SourcePair& pair, std::size_t size) {
  check_window(pair, size);
  const std::size_t bottom = pair.height() - size;
  const std::size_t right = pair.width() - size;
  return {sample_at(pair, {0, 0}, size), sample_at(pair, {0, right}, size), sample_at(pair, {bottom, 0}, size),
          sample_at(pair, {bottom, right}, size)};
}

SourcePair synthetic_pair(std::string pair_id, std::size_t height, std::size_t width, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ fnv1a64(pair_id.data(), pair_id.size()));
  std::uniform_real_distribution<double> freq(0.02, 0.09);
  std::uniform_real_distribution<double> phase(0.0, 6.283185307179586);
  std::normal_distribution<double> grain(0.0, 4.0);
  const double fx = freq(rng), fy = freq(rng), px = phase(rng), py = phase(rng);
  const double gx = freq(rng) * 0.5, gy = freq(rng) * 0.5;

  Image8 fundus(height, width, 3);
  Image8 angio(height, width, 1);
  const auto to8 = [](double v) { return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0)); };
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double band = std::sin(fx * static_cast<double>(x) + px) * std::cos(fy * static_cast<double>(y) + py);
      const double vessel = std::exp(-12.0 * band * band);
      const double shade = 0.5 + 0.5 * std::sin(gx * static_cast<double>(x) + gy * static_cast<double>(y));
      fundus.at(y, x, 0) = to8(200.0 - 90.0 * vessel - 30.0 * shade + grain(rng));
      fundus.at(y, x, 1) = to8(110.0 - 60.0 * vessel - 20.0 * shade + grain(rng));
      fundus.at(y, x, 2) = to8(50.0 - 20.0 * vessel + grain(rng));
      angio.at(y, x, 0) = to8(25.0 + 210.0 * vessel + 10.0 * shade);
    }
  return make_pair(std::move(pair_id), std::move(fundus), std::move(angio));
}

void write_synthetic_dataset(const fs::path& root, std::size_t count, std::size_t height, std::size_t width,
                             std::uint64_t seed, std::size_t eval_count) {
  if (eval_count > count) throw ConfigError("eval_count exceeds count");
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < count; ++i) {
    std::ostringstream id;
    id << "pair_" << std::setw(3) << std::setfill('0') << i + 1;
    const SourcePair p = synthetic_pair(id.str(), height, width, seed);
    write_image(root / "fundus" / (id.str() + ".png"), *p.fundus);
    write_image(root / "angio" / (id.str() + ".png"), *p.angiogram);
    entries.push_back({{"id", id.str()}, {"split", i + eval_count >= count ? "eval" : "train"}, {"aligned", true}});
  }
  std::ofstream os(root / "manifest.json");
  os << nlohmann::json{{"pairs", entries}}.dump(2) << '\n';
  if (!os) throw IoError("cannot write " + (root / "manifest.json").string());
}

void save_sample_cache(const fs::path& path, const SampleCacheKey& key, const std::vector<PairedSample>& samples) {
  Archive a;
  a.meta["kind"] = "sample-cache";
  a.meta["key"] = {{"manifest_hash", key.manifest_hash},
                   {"seed", key.seed},
                   {"crops_per_pair", key.crops_per_pair},
                   {"size", key.size}};
  nlohmann::json list = nlohmann::json::array();
  for (const auto& s : samples) {
    list.push_back({{"pair_id", s.pair_id}, {"row", s.offset.row}, {"col", s.offset.col}});
    const auto store = [&](const std::string& name, const Image8& img) {
      if (a.bytes.count(name)) return;
      a.bytes[name] = {Shape{1, img.channels, img.height, img.width}, img.data};
    };
    store("fundus/" + s.pair_id, *s.fundus_source);
    store("angio/" + s.pair_id, *s.angio_source);
  }
  a.meta["samples"] = std::move(list);
  a.save(path);
}

std::optional<std::vector<PairedSample>> load_sample_cache(const fs::path& path, const SampleCacheKey& key) {
  if (!fs::exists(path)) return std::nullopt;
  const Archive a = Archive::load(path);
  try {
    if (a.meta.value("kind", "") != "sample-cache") return std::nullopt;
    const auto& k = a.meta.at("key");
    const SampleCacheKey stored{k.at("manifest_hash").get<std::string>(), k.at("seed").get<std::uint64_t>(),
                                k.at("crops_per_pair").get<std::size_t>(), k.at("size").get<std::size_t>()};
    if (!(stored == key)) return std::nullopt;

    std::map<std::string, std::shared_ptr<const Image8>> images;
    const auto image = [&](const std::string& name) {
      auto it = images.find(name);
      if (it != images.end()) return it->second;
      const auto b = a.bytes.find(name);
      if (b == a.bytes.end()) throw LoadError(path.string() + ": sample cache lacks " + name);
      Image8 img(b->second.shape.h, b->second.shape.w, b->second.shape.c);
      img.data = b->second.data;
      auto ptr = std::make_shared<const Image8>(std::move(img));
      images.emplace(name, ptr);
      return ptr;
    };
    std::vector<PairedSample> out;
    for (const auto& s : a.meta.at("samples")) {
      const auto id = s.at("pair_id").get<std::string>();
      out.push_back({id,
                     {s.at("row").get<std::size_t>(), s.at("col").get<std::size_t>()},
                     key.size,
                     image("fundus/" + id),
                     image("angio/" + id)});
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": malformed sample cache (" + e.what() + ")");
  }
}

}  // namespace angiogan
