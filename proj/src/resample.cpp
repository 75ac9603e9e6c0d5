#include "angiogan/resample.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "angiogan/errors.hpp"

namespace angiogan {
namespace {

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

double lanczos_kernel(double x, int lobes) {
  const double a = static_cast<double>(lobes);
  if (std::abs(x) >= a) return 0.0;
  return sinc(x) * sinc(x / a);
}

LanczosAxis::LanczosAxis(std::size_t in, std::size_t out, int lobes) : in_(in), rows_(out) {
  if (in == 0 || out == 0) throw InputError("Lanczos resampling needs non-empty extents");
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const double stretch = std::max(scale, 1.0);
  const double support = static_cast<double>(lobes) * stretch;
  const auto last = static_cast<std::ptrdiff_t>(in) - 1;
  for (std::size_t i = 0; i < out; ++i) {
    const double center = (static_cast<double>(i) + 0.5) * scale - 0.5;
    const auto first_tap = static_cast<std::ptrdiff_t>(std::floor(center - support));
    const auto last_tap = static_cast<std::ptrdiff_t>(std::ceil(center + support));
    std::vector<double> dense(in, 0.0);
    double total = 0.0;
    for (std::ptrdiff_t j = first_tap; j <= last_tap; ++j) {
      const double w = lanczos_kernel((static_cast<double>(j) - center) / stretch, lobes);
      if (w == 0.0) continue;
      dense[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(j, 0, last))] += w;
      total += w;
    }
    for (std::size_t j = 0; j < in; ++j) {
      if (dense[j] != 0.0) rows_[i].push_back({j, dense[j] / total});
    }
  }
}

LanczosResampler::LanczosResampler(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w,
                                   int lobes)
    : rows_(in_h, out_h, lobes), cols_(in_w, out_w, lobes) {}

Tensor LanczosResampler::apply(const Tensor& x) const {
  const Shape& s = x.shape();
  if (s.h != rows_.in() || s.w != cols_.in()) throw InputError("resampler built for a different input size");
  const std::size_t oh = rows_.out();
  const std::size_t ow = cols_.out();
  Tensor y({s.n, s.c, oh, ow});
  const auto planes = static_cast<std::ptrdiff_t>(s.n * s.c);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const double* src = x.data() + static_cast<std::size_t>(p) * s.plane();
    double* dst = y.data() + static_cast<std::size_t>(p) * oh * ow;
    std::vector<double> horizontal(s.h * ow, 0.0);
    for (std::size_t r = 0; r < s.h; ++r)
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (const auto& tap : cols_.row(j)) acc += tap.weight * src[r * s.w + tap.index];
        horizontal[r * ow + j] = acc;
      }
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (const auto& tap : rows_.row(i)) acc += tap.weight * horizontal[tap.index * ow + j];
        dst[i * ow + j] = acc;
      }
  }
  return y;
}

Tensor LanczosResampler::adjoint(const Tensor& dy) const {
  const Shape& s = dy.shape();
  if (s.h != rows_.out() || s.w != cols_.out()) throw InputError("adjoint gradient has the wrong size");
  const std::size_t ih = rows_.in();
  const std::size_t iw = cols_.in();
  Tensor dx({s.n, s.c, ih, iw});
  const auto planes = static_cast<std::ptrdiff_t>(s.n * s.c);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const double* g = dy.data() + static_cast<std::size_t>(p) * s.plane();
    double* dst = dx.data() + static_cast<std::size_t>(p) * ih * iw;
    std::vector<double> horizontal(ih * s.w, 0.0);
    for (std::size_t i = 0; i < s.h; ++i)
      for (const auto& tap : rows_.row(i))
        for (std::size_t j = 0; j < s.w; ++j) horizontal[tap.index * s.w + j] += tap.weight * g[i * s.w + j];
    for (std::size_t r = 0; r < ih; ++r)
      for (std::size_t j = 0; j < s.w; ++j) {
        const double v = horizontal[r * s.w + j];
        for (const auto& tap : cols_.row(j)) dst[r * iw + tap.index] += tap.weight * v;
      }
  }
  return dx;
}

Tensor lanczos_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  return LanczosResampler(x.shape().h, x.shape().w, out_h, out_w).apply(x);
}

Tensor downsample2(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) throw InputError("2x downsampling needs even extents, got " + s.str());
  return LanczosResampler(s.h, s.w, s.h / 2, s.w / 2).apply(x);
}

Tensor downsample2_adjoint(const Tensor& dy) {
  const Shape& s = dy.shape();
  return LanczosResampler(s.h * 2, s.w * 2, s.h, s.w).adjoint(dy);
}

ImagePyramid build_pyramid(const Tensor& image) {
  const Shape& s = image.shape();
  if (s.h % 4 != 0 || s.w % 4 != 0 || s.h == 0 || s.w == 0) {
    throw InputError("pyramid input extents must be divisible by 4, got " + s.str());
  }
  ImagePyramid pyramid;
  pyramid.levels[0] = image;
  pyramid.levels[1] = downsample2(image);
  pyramid.levels[2] = downsample2(pyramid.levels[1]);
  return pyramid;
}

}  // namespace angiogan
