#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace angiogan {

/// 8-bit interleaved image, rows top to bottom, channels RGB or gray.
struct Image8 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> data;

  Image8() = default;
  Image8(std::size_t h, std::size_t w, std::size_t c) : height(h), width(w), channels(c), data(h * w * c) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t ch) { return data[(y * width + x) * channels + ch]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t ch) const { return data[(y * width + x) * channels + ch]; }
  bool operator==(const Image8&) const = default;
};

/// Decodes PNG/JPEG/TIFF/BMP. `channels` is 3 (RGB) or 1; color sources
/// requested as 1 channel are averaged, gray sources requested as 3 are
/// replicated.
Image8 read_image(const std::filesystem::path& path, std::size_t channels);

/// Writes by extension (.png recommended). Throws IoError with the path.
void write_image(const std::filesystem::path& path, const Image8& image);

}  // namespace angiogan
