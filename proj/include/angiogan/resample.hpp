#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "angiogan/tensor.hpp"

namespace angiogan {

/// Lanczos window sinc(x) * sinc(x / lobes) on |x| < lobes, zero outside.
double lanczos_kernel(double x, int lobes = 3);

/// One axis of a separable Lanczos resampler: a sparse (out x in) matrix whose
/// rows sum to one. Output sample i is centred on input coordinate
/// (i + 0.5) * in / out - 0.5; when shrinking, the kernel is stretched by the
/// scale factor. Taps falling outside the input are clamped to the edge.
class LanczosAxis {
 public:
  struct Tap {
    std::size_t index;
    double weight;
  };

  LanczosAxis(std::size_t in, std::size_t out, int lobes = 3);

  std::size_t in() const { return in_; }
  std::size_t out() const { return rows_.size(); }
  const std::vector<Tap>& row(std::size_t i) const { return rows_[i]; }

 private:
  std::size_t in_;
  std::vector<std::vector<Tap>> rows_;
};

/// Separable 2-D Lanczos resampling; a linear map with an explicit adjoint so
/// gradients can flow through the image pyramid.
class LanczosResampler {
 public:
  LanczosResampler(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w, int lobes = 3);

  Tensor apply(const Tensor& x) const;
  /// Transpose of apply(); maps an output-sized gradient back to input size.
  Tensor adjoint(const Tensor& dy) const;

 private:
  LanczosAxis rows_;
  LanczosAxis cols_;
};

Tensor lanczos_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);

/// Halve both spatial extents; the extents must be even.
Tensor downsample2(const Tensor& x);
Tensor downsample2_adjoint(const Tensor& dy);

/// Full, 1/2 and 1/4 resolution; each level is the Lanczos 2x reduction of
/// the previous one.
struct ImagePyramid {
  std::array<Tensor, 3> levels;
};

/// Throws InputError unless both spatial extents are divisible by 4.
ImagePyramid build_pyramid(const Tensor& image);

}  // namespace angiogan
