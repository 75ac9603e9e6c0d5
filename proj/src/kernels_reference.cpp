#include "angiogan/kernels_reference.hpp"

#include <algorithm>

#include "angiogan/errors.hpp"

namespace angiogan::kernels::reference {
namespace {

// Zero outside the image.
double sample_or_zero(const Tensor& x, std::size_t n, std::size_t c, std::ptrdiff_t y, std::ptrdiff_t xx) {
  const Shape& s = x.shape();
  if (y < 0 || xx < 0 || y >= static_cast<std::ptrdiff_t>(s.h) || xx >= static_cast<std::ptrdiff_t>(s.w)) return 0.0;
  return x.at(n, c, static_cast<std::size_t>(y), static_cast<std::size_t>(xx));
}

std::ptrdiff_t source_index(std::size_t o, std::size_t k, ConvGeometry g) {
  return static_cast<std::ptrdiff_t>(o * g.stride + k) - static_cast<std::ptrdiff_t>(g.pad);
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, ConvGeometry g) {
  const Shape& s = x.shape();
  const Shape& ws = w.shape();
  if (ws.c != s.c) throw ConfigError("reference conv2d: channel mismatch");
  const std::size_t ho = conv_output_extent(s.h, ws.h, g);
  const std::size_t wo = conv_output_extent(s.w, ws.w, g);
  Tensor y({s.n, ws.n, ho, wo});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t co = 0; co < ws.n; ++co)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < s.c; ++ci)
            for (std::size_t ky = 0; ky < ws.h; ++ky)
              for (std::size_t kx = 0; kx < ws.w; ++kx)
                acc += w.at(co, ci, ky, kx) * sample_or_zero(x, n, ci, source_index(oy, ky, g), source_index(ox, kx, g));
          y.at(n, co, oy, ox) = acc;
        }
  return y;
}

Tensor conv2d_backward_input(const Tensor& dy, const Tensor& w, ConvGeometry g, const Shape& input_shape) {
  const Shape& ws = w.shape();
  const Shape& ds = dy.shape();
  Tensor dx(input_shape);
  for (std::size_t n = 0; n < ds.n; ++n)
    for (std::size_t co = 0; co < ws.n; ++co)
      for (std::size_t oy = 0; oy < ds.h; ++oy)
        for (std::size_t ox = 0; ox < ds.w; ++ox)
          for (std::size_t ci = 0; ci < ws.c; ++ci)
            for (std::size_t ky = 0; ky < ws.h; ++ky)
              for (std::size_t kx = 0; kx < ws.w; ++kx) {
                const auto iy = source_index(oy, ky, g);
                const auto ix = source_index(ox, kx, g);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(input_shape.h) ||
                    ix >= static_cast<std::ptrdiff_t>(input_shape.w))
                  continue;
                dx.at(n, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) +=
                    w.at(co, ci, ky, kx) * dy.at(n, co, oy, ox);
              }
  return dx;
}

void conv2d_backward_weight(const Tensor& x, const Tensor& dy, ConvGeometry g, Tensor& dw) {
  const Shape& ws = dw.shape();
  const Shape& ds = dy.shape();
  for (std::size_t co = 0; co < ws.n; ++co)
    for (std::size_t ci = 0; ci < ws.c; ++ci)
      for (std::size_t ky = 0; ky < ws.h; ++ky)
        for (std::size_t kx = 0; kx < ws.w; ++kx) {
          double acc = 0.0;
          for (std::size_t n = 0; n < ds.n; ++n)
            for (std::size_t oy = 0; oy < ds.h; ++oy)
              for (std::size_t ox = 0; ox < ds.w; ++ox)
                acc += dy.at(n, co, oy, ox) * sample_or_zero(x, n, ci, source_index(oy, ky, g), source_index(ox, kx, g));
          dw.at(co, ci, ky, kx) += acc;
        }
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, ConvGeometry g, std::size_t output_pad) {
  const Shape& s = x.shape();
  const Shape& ws = w.shape();
  if (ws.n != s.c) throw ConfigError("reference conv_transpose2d: channel mismatch");
  // Stamp onto an unpadded canvas, then crop `pad` from the leading edges.
  const std::size_t full_h = (s.h - 1) * g.stride + ws.h + output_pad;
  const std::size_t full_w = (s.w - 1) * g.stride + ws.w + output_pad;
  Tensor canvas({s.n, ws.c, full_h, full_w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t ci = 0; ci < s.c; ++ci)
      for (std::size_t iy = 0; iy < s.h; ++iy)
        for (std::size_t ix = 0; ix < s.w; ++ix) {
          const double v = x.at(n, ci, iy, ix);
          for (std::size_t co = 0; co < ws.c; ++co)
            for (std::size_t ky = 0; ky < ws.h; ++ky)
              for (std::size_t kx = 0; kx < ws.w; ++kx)
                canvas.at(n, co, iy * g.stride + ky, ix * g.stride + kx) += v * w.at(ci, co, ky, kx);
        }
  const std::size_t ho = full_h - 2 * g.pad;
  const std::size_t wo = full_w - 2 * g.pad;
  Tensor y({s.n, ws.c, ho, wo});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t co = 0; co < ws.c; ++co)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) y.at(n, co, oy, ox) = canvas.at(n, co, oy + g.pad, ox + g.pad);
  return y;
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w) {
  const Shape& s = x.shape();
  const std::size_t k = w.shape().h;
  Tensor y({s.n, s.c, s.h - k + 1, s.w - k + 1});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t oy = 0; oy + k <= s.h; ++oy)
        for (std::size_t ox = 0; ox + k <= s.w; ++ox) {
          double acc = 0.0;
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) acc += w.at(c, 0, ky, kx) * x.at(n, c, oy + ky, ox + kx);
          y.at(n, c, oy, ox) = acc;
        }
  return y;
}

Tensor reflection_pad(const Tensor& x, std::size_t pad) {
  const Shape& s = x.shape();
  Tensor y({s.n, s.c, s.h + 2 * pad, s.w + 2 * pad});
  const auto mirror = [](std::ptrdiff_t i, std::size_t n) {
    const auto sn = static_cast<std::ptrdiff_t>(n);
    while (i < 0 || i >= sn) i = i < 0 ? -i : 2 * (sn - 1) - i;
    return static_cast<std::size_t>(i);
  };
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t oy = 0; oy < y.shape().h; ++oy)
        for (std::size_t ox = 0; ox < y.shape().w; ++ox)
          y.at(n, c, oy, ox) = x.at(n, c, mirror(static_cast<std::ptrdiff_t>(oy) - static_cast<std::ptrdiff_t>(pad), s.h),
                                    mirror(static_cast<std::ptrdiff_t>(ox) - static_cast<std::ptrdiff_t>(pad), s.w));
  return y;
}

}  // namespace angiogan::kernels::reference
