#include "angiogan/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <vector>

#include "angiogan/errors.hpp"

namespace angiogan::kernels {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

// Upper bound on the im2col scratch buffer, in doubles (32 MiB).
constexpr std::size_t kColumnBudget = std::size_t{1} << 22;

struct Im2Col {
  std::size_t cin, h, w, k, ho, wo;
  ConvGeometry g;

  std::size_t rows() const { return cin * k * k; }

  std::size_t tile_rows() const {
    const std::size_t per_row = rows() * wo;
    return std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(per_row, 1), 1, ho);
  }

  void gather(const double* x, std::size_t oy0, std::size_t oy1, double* col) const {
    const std::size_t cols = (oy1 - oy0) * wo;
    const auto sh = static_cast<std::ptrdiff_t>(h);
    const auto sw = static_cast<std::ptrdiff_t>(w);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(cin); ++ci) {
      const double* plane = x + static_cast<std::size_t>(ci) * h * w;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          double* dst = col + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * cols;
          for (std::size_t oy = oy0; oy < oy1; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
            double* row = dst + (oy - oy0) * wo;
            if (iy < 0 || iy >= sh) {
              std::fill_n(row, wo, 0.0);
              continue;
            }
            const double* src = plane + static_cast<std::size_t>(iy) * w;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
              row[ox] = (ix < 0 || ix >= sw) ? 0.0 : src[ix];
            }
          }
        }
      }
    }
  }

  void scatter_add(const double* col, std::size_t oy0, std::size_t oy1, double* dx) const {
    const std::size_t cols = (oy1 - oy0) * wo;
    const auto sh = static_cast<std::ptrdiff_t>(h);
    const auto sw = static_cast<std::ptrdiff_t>(w);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(cin); ++ci) {
      double* plane = dx + static_cast<std::size_t>(ci) * h * w;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double* src = col + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * cols;
          for (std::size_t oy = oy0; oy < oy1; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= sh) continue;
            const double* row = src + (oy - oy0) * wo;
            double* dst = plane + static_cast<std::size_t>(iy) * w;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
              if (ix >= 0 && ix < sw) dst[ix] += row[ox];
            }
          }
        }
      }
    }
  }
};

Im2Col make_layout(const Shape& in, const Tensor& w, ConvGeometry g) {
  if (g.stride == 0) throw ConfigError("convolution stride must be positive");
  const Shape& ws = w.shape();
  if (ws.h != ws.w) throw ConfigError("only square kernels are supported");
  if (ws.c != in.c) {
    throw ConfigError("convolution expects " + std::to_string(ws.c) + " input channels, got " + std::to_string(in.c));
  }
  if (in.h + 2 * g.pad < ws.h || in.w + 2 * g.pad < ws.w) {
    throw InputError("input " + in.str() + " smaller than kernel " + std::to_string(ws.h));
  }
  return {in.c, in.h, in.w, ws.h, conv_output_extent(in.h, ws.h, g), conv_output_extent(in.w, ws.w, g), g};
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, ConvGeometry g) {
  return (in + 2 * g.pad - kernel) / g.stride + 1;
}

Tensor conv2d(const Tensor& x, const Tensor& w, ConvGeometry g) {
  const Shape& in = x.shape();
  const Im2Col L = make_layout(in, w, g);
  const std::size_t cout = w.shape().n;
  Tensor y({in.n, cout, L.ho, L.wo});
  const Eigen::Map<const RowMat> W(w.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(L.rows()));
  const std::size_t tile = L.tile_rows();
  std::vector<double> col(L.rows() * tile * L.wo);
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t oy0 = 0; oy0 < L.ho; oy0 += tile) {
      const std::size_t oy1 = std::min(L.ho, oy0 + tile);
      const auto cols = static_cast<Eigen::Index>((oy1 - oy0) * L.wo);
      L.gather(x.plane(n, 0), oy0, oy1, col.data());
      const Eigen::Map<const RowMat> C(col.data(), static_cast<Eigen::Index>(L.rows()), cols);
      StridedMap Y(y.plane(n, 0) + oy0 * L.wo, static_cast<Eigen::Index>(cout), cols,
                   Eigen::OuterStride<>(static_cast<Eigen::Index>(L.ho * L.wo)));
      Y.noalias() = W * C;
    }
  }
  return y;
}

Tensor conv2d_backward_input(const Tensor& dy, const Tensor& w, ConvGeometry g, const Shape& input_shape) {
  const Im2Col L = make_layout(input_shape, w, g);
  const std::size_t cout = w.shape().n;
  if (dy.shape() != Shape{input_shape.n, cout, L.ho, L.wo}) {
    throw InputError("conv2d_backward_input: gradient shape " + dy.shape().str());
  }
  Tensor dx(input_shape);
  const Eigen::Map<const RowMat> W(w.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(L.rows()));
  const std::size_t tile = L.tile_rows();
  std::vector<double> col(L.rows() * tile * L.wo);
  for (std::size_t n = 0; n < input_shape.n; ++n) {
    for (std::size_t oy0 = 0; oy0 < L.ho; oy0 += tile) {
      const std::size_t oy1 = std::min(L.ho, oy0 + tile);
      const auto cols = static_cast<Eigen::Index>((oy1 - oy0) * L.wo);
      const ConstStridedMap DY(dy.plane(n, 0) + oy0 * L.wo, static_cast<Eigen::Index>(cout), cols,
                               Eigen::OuterStride<>(static_cast<Eigen::Index>(L.ho * L.wo)));
      Eigen::Map<RowMat> C(col.data(), static_cast<Eigen::Index>(L.rows()), cols);
      C.noalias() = W.transpose() * DY;
      L.scatter_add(col.data(), oy0, oy1, dx.plane(n, 0));
    }
  }
  return dx;
}

void conv2d_backward_weight(const Tensor& x, const Tensor& dy, ConvGeometry g, Tensor& dw) {
  const Im2Col L = make_layout(x.shape(), dw, g);
  const std::size_t cout = dw.shape().n;
  if (dy.shape() != Shape{x.shape().n, cout, L.ho, L.wo}) {
    throw InputError("conv2d_backward_weight: gradient shape " + dy.shape().str());
  }
  Eigen::Map<RowMat> DW(dw.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(L.rows()));
  const std::size_t tile = L.tile_rows();
  std::vector<double> col(L.rows() * tile * L.wo);
  for (std::size_t n = 0; n < x.shape().n; ++n) {
    for (std::size_t oy0 = 0; oy0 < L.ho; oy0 += tile) {
      const std::size_t oy1 = std::min(L.ho, oy0 + tile);
      const auto cols = static_cast<Eigen::Index>((oy1 - oy0) * L.wo);
      L.gather(x.plane(n, 0), oy0, oy1, col.data());
      const Eigen::Map<const RowMat> C(col.data(), static_cast<Eigen::Index>(L.rows()), cols);
      const ConstStridedMap DY(dy.plane(n, 0) + oy0 * L.wo, static_cast<Eigen::Index>(cout), cols,
                               Eigen::OuterStride<>(static_cast<Eigen::Index>(L.ho * L.wo)));
      DW.noalias() += DY * C.transpose();
    }
  }
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, ConvGeometry g, std::size_t output_pad) {
  if (output_pad >= g.stride) throw ConfigError("output padding must be smaller than the stride");
  const Shape& in = x.shape();
  const Shape& ws = w.shape();
  if (ws.n != in.c) {
    throw ConfigError("transposed convolution expects " + std::to_string(ws.n) + " input channels, got " +
                      std::to_string(in.c));
  }
  const std::size_t ho = (in.h - 1) * g.stride + ws.h + output_pad - 2 * g.pad;
  const std::size_t wo = (in.w - 1) * g.stride + ws.w + output_pad - 2 * g.pad;
  return conv2d_backward_input(x, w, g, Shape{in.n, ws.c, ho, wo});
}

Tensor conv_transpose2d_backward_input(const Tensor& dy, const Tensor& w, ConvGeometry g) {
  return conv2d(dy, w, g);
}

void conv_transpose2d_backward_weight(const Tensor& x, const Tensor& dy, ConvGeometry g, Tensor& dw) {
  conv2d_backward_weight(dy, x, g, dw);
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w) {
  const Shape& s = x.shape();
  const Shape& ws = w.shape();
  if (ws.n != s.c || ws.c != 1 || ws.h != ws.w) {
    throw ConfigError("depthwise weights " + ws.str() + " do not match " + std::to_string(s.c) + " channels");
  }
  const std::size_t k = ws.h;
  if (s.h < k || s.w < k) throw InputError("input " + s.str() + " smaller than kernel");
  const std::size_t ho = s.h - k + 1;
  const std::size_t wo = s.w - k + 1;
  Tensor y({s.n, s.c, ho, wo});
  const auto planes = static_cast<std::ptrdiff_t>(s.n * s.c);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const std::size_t c = static_cast<std::size_t>(p) % s.c;
    const double* src = x.data() + static_cast<std::size_t>(p) * s.plane();
    const double* kern = w.data() + c * k * k;
    double* dst = y.data() + static_cast<std::size_t>(p) * ho * wo;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double kv = kern[ky * k + kx];
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const double* row = src + (oy + ky) * s.w + kx;
          double* out = dst + oy * wo;
          for (std::size_t ox = 0; ox < wo; ++ox) out[ox] += kv * row[ox];
        }
      }
    }
  }
  return y;
}

Tensor depthwise_conv2d_backward_input(const Tensor& dy, const Tensor& w, const Shape& input_shape) {
  const std::size_t k = w.shape().h;
  const std::size_t ho = dy.shape().h;
  const std::size_t wo = dy.shape().w;
  Tensor dx(input_shape);
  const auto planes = static_cast<std::ptrdiff_t>(input_shape.n * input_shape.c);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const std::size_t c = static_cast<std::size_t>(p) % input_shape.c;
    const double* g = dy.data() + static_cast<std::size_t>(p) * ho * wo;
    const double* kern = w.data() + c * k * k;
    double* dst = dx.data() + static_cast<std::size_t>(p) * input_shape.plane();
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double kv = kern[ky * k + kx];
        for (std::size_t oy = 0; oy < ho; ++oy) {
          double* row = dst + (oy + ky) * input_shape.w + kx;
          const double* grow = g + oy * wo;
          for (std::size_t ox = 0; ox < wo; ++ox) row[ox] += kv * grow[ox];
        }
      }
    }
  }
  return dx;
}

void depthwise_conv2d_backward_weight(const Tensor& x, const Tensor& dy, Tensor& dw) {
  const Shape& s = x.shape();
  const std::size_t k = dw.shape().h;
  const std::size_t ho = dy.shape().h;
  const std::size_t wo = dy.shape().w;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(s.c); ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    double* kern = dw.data() + c * k * k;
    for (std::size_t n = 0; n < s.n; ++n) {
      const double* src = x.plane(n, c);
      const double* g = dy.plane(n, c);
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          double acc = 0.0;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const double* row = src + (oy + ky) * s.w + kx;
            const double* grow = g + oy * wo;
            for (std::size_t ox = 0; ox < wo; ++ox) acc += row[ox] * grow[ox];
          }
          kern[ky * k + kx] += acc;
        }
      }
    }
  }
}

namespace {

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto sn = static_cast<std::ptrdiff_t>(n);
  if (i < 0) i = -i;
  if (i >= sn) i = 2 * (sn - 1) - i;
  return static_cast<std::size_t>(i);
}

void check_reflection(const Shape& s, std::size_t pad) {
  if (pad >= s.h || pad >= s.w) {
    throw InputError("reflection padding " + std::to_string(pad) + " needs spatial extent > pad, got " + s.str());
  }
}

}  // namespace

Tensor reflection_pad(const Tensor& x, std::size_t pad) {
  const Shape& s = x.shape();
  check_reflection(s, pad);
  const std::size_t ho = s.h + 2 * pad;
  const std::size_t wo = s.w + 2 * pad;
  Tensor y({s.n, s.c, ho, wo});
  const auto planes = static_cast<std::ptrdiff_t>(s.n * s.c);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const double* src = x.data() + static_cast<std::size_t>(p) * s.plane();
    double* dst = y.data() + static_cast<std::size_t>(p) * ho * wo;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      const std::size_t iy = reflect(static_cast<std::ptrdiff_t>(oy) - static_cast<std::ptrdiff_t>(pad), s.h);
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const std::size_t ix = reflect(static_cast<std::ptrdiff_t>(ox) - static_cast<std::ptrdiff_t>(pad), s.w);
        dst[oy * wo + ox] = src[iy * s.w + ix];
      }
    }
  }
  return y;
}

Tensor reflection_pad_backward(const Tensor& dy, std::size_t pad) {
  const Shape& ps = dy.shape();
  const Shape s{ps.n, ps.c, ps.h - 2 * pad, ps.w - 2 * pad};
  Tensor dx(s);
  const auto planes = static_cast<std::ptrdiff_t>(s.n * s.c);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const double* src = dy.data() + static_cast<std::size_t>(p) * ps.plane();
    double* dst = dx.data() + static_cast<std::size_t>(p) * s.plane();
    for (std::size_t oy = 0; oy < ps.h; ++oy) {
      const std::size_t iy = reflect(static_cast<std::ptrdiff_t>(oy) - static_cast<std::ptrdiff_t>(pad), s.h);
      for (std::size_t ox = 0; ox < ps.w; ++ox) {
        const std::size_t ix = reflect(static_cast<std::ptrdiff_t>(ox) - static_cast<std::ptrdiff_t>(pad), s.w);
        dst[iy * s.w + ix] += src[oy * ps.w + ox];
      }
    }
  }
  return dx;
}

}  // namespace angiogan::kernels
