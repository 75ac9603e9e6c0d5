#include "angiogan/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "angiogan/errors.hpp"

namespace angiogan {

Image8 read_image(const std::filesystem::path& path, std::size_t channels) {
  if (channels != 1 && channels != 3) throw ConfigError("read_image: channels must be 1 or 3");
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw IngestionError("cannot decode image " + path.string());
  if (m.depth() == CV_16U) m.convertTo(m, CV_8U, 1.0 / 257.0);
  if (m.depth() != CV_8U) throw IngestionError(path.string() + ": unsupported pixel depth");

  // OpenCV stores color as BGR(A); alpha is ignored.
  const auto have = static_cast<std::size_t>(m.channels());
  if (have != 1 && have != 3 && have != 4) throw IngestionError(path.string() + ": unsupported channel count");

  Image8 out(static_cast<std::size_t>(m.rows), static_cast<std::size_t>(m.cols), channels);
  for (std::size_t y = 0; y < out.height; ++y) {
    const std::uint8_t* row = m.ptr<std::uint8_t>(static_cast<int>(y));
    for (std::size_t x = 0; x < out.width; ++x) {
      const std::uint8_t* px = row + x * have;
      if (have == 1) {
        for (std::size_t c = 0; c < channels; ++c) out.at(y, x, c) = px[0];
      } else if (channels == 3) {
        out.at(y, x, 0) = px[2];
        out.at(y, x, 1) = px[1];
        out.at(y, x, 2) = px[0];
      } else {
        const int sum = px[0] + px[1] + px[2];
        out.at(y, x, 0) = static_cast<std::uint8_t>((sum + 1) / 3);
      }
    }
  }
  return out;
}

void write_image(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) throw InputError("write_image: channels must be 1 or 3");
  const int type = image.channels == 1 ? CV_8UC1 : CV_8UC3;
  cv::Mat m(static_cast<int>(image.height), static_cast<int>(image.width), type);
  for (std::size_t y = 0; y < image.height; ++y) {
    std::uint8_t* row = m.ptr<std::uint8_t>(static_cast<int>(y));
    for (std::size_t x = 0; x < image.width; ++x) {
      if (image.channels == 1) {
        row[x] = image.at(y, x, 0);
      } else {
        row[3 * x + 0] = image.at(y, x, 2);
        row[3 * x + 1] = image.at(y, x, 1);
        row[3 * x + 2] = image.at(y, x, 0);
      }
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), m);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

}  // namespace angiogan
