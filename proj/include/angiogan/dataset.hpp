#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "angiogan/image_io.hpp"
#include "angiogan/tensor.hpp"

namespace angiogan {

/// One fundus/angiogram pair of identical dimensions.
struct SourcePair {
  std::string pair_id;
  std::shared_ptr<const Image8> fundus;     // 3 channels
  std::shared_ptr<const Image8> angiogram;  // 1 channel
  bool aligned = true;
  std::string split = "train";

  std::size_t height() const { return fundus->height; }
  std::size_t width() const { return fundus->width; }
};

struct CropOffset {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const CropOffset&) const = default;
};

/// An aligned crop pair. Both crops share `offset` by construction: the
/// sample keeps the 8-bit source pair and cuts the normalized crops on demand,
/// so 850 full-size samples cost the 17 sources rather than 850 double crops.
struct PairedSample {
  std::string pair_id;
  CropOffset offset;
  std::size_t size = 0;
  std::shared_ptr<const Image8> fundus_source;
  std::shared_ptr<const Image8> angio_source;

  Tensor fundus_crop() const;  // [1, 3, size, size] in [-1, 1]
  Tensor angio_crop() const;   // [1, 1, size, size] in [-1, 1]
};

/// v / 127.5 - 1, as a [1, C, H, W] tensor.
Tensor normalize(const Image8& image);
/// round((t + 1) * 127.5) clamped to [0, 255]; `t` must have batch 1.
Image8 denormalize(const Tensor& t);
/// Normalized window of `image` at `offset`.
Tensor normalize_crop(const Image8& image, CropOffset offset, std::size_t size);

SourcePair make_pair(std::string pair_id, Image8 fundus, Image8 angiogram);

/// Reads root/manifest.json and the listed pairs from root/fundus and
/// root/angio. Manifest: {"pairs": [{"id": "...", "split": "train"|"eval",
/// "aligned": true}, ...]}; bare id strings are also accepted. Unaligned
/// entries are skipped. `split` filters by split when given. A non-empty
/// `manifest` replaces root/manifest.json; image paths stay under `root`.
std::vector<SourcePair> load_pairs(const std::filesystem::path& root,
                                   const std::optional<std::string>& split = std::nullopt,
                                   const std::filesystem::path& manifest = {});

/// Content hash of the manifest file, for cache keys and run manifests.
std::string manifest_hash(const std::filesystem::path& root, const std::filesystem::path& manifest = {});

/// `n` uniformly placed windows; the offset stream depends on (seed, pair_id).
std::vector<PairedSample> random_crops(const SourcePair& pair, std::size_t n, std::size_t size, std::uint64_t seed);

/// Crops of every pair in order, n per pair.
std::vector<PairedSample> build_training_set(const std::vector<SourcePair>& pairs, std::size_t n, std::size_t size,
                                             std::uint64_t seed);

/// Four corner-anchored windows: top-left, top-right, bottom-left, bottom-right.
std::vector<PairedSample> eval_quadrant_crops(const SourcePair& pair, std::size_t size);

/// A deterministic stand-in pair: smooth vessel-like bands that appear dark
/// in the fundus and bright in the angiogram. Used for demos and tests.
SourcePair synthetic_pair(std::string pair_id, std::size_t height, std::size_t width, std::uint64_t seed);

/// Writes `count` synthetic pairs as PNGs plus a manifest under `root`;
/// the last `eval_count` are marked split "eval".
void write_synthetic_dataset(const std::filesystem::path& root, std::size_t count, std::size_t height,
                             std::size_t width, std::uint64_t seed, std::size_t eval_count = 0);

struct SampleCacheKey {
  std::string manifest_hash;
  std::uint64_t seed = 0;
  std::size_t crops_per_pair = 0;
  std::size_t size = 0;
  bool operator==(const SampleCacheKey&) const = default;
};

/// Packs the 8-bit sources and crop offsets into one archive.
void save_sample_cache(const std::filesystem::path& path, const SampleCacheKey& key,
                       const std::vector<PairedSample>& samples);
/// Returns nothing if the file is missing or was written for another key.
std::optional<std::vector<PairedSample>> load_sample_cache(const std::filesystem::path& path,
                                                           const SampleCacheKey& key);

}  // namespace angiogan
