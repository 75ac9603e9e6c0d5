#pragma once

// Data-parallel compute kernels. Every kernel here has a serial counterpart in
// kernels_reference.hpp that the unit tests and the benchmark compare against.

#include <cstddef>

#include "angiogan/tensor.hpp"

namespace angiogan::kernels {

/// Stride and implicit zero padding of a square-kernel convolution.
struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, ConvGeometry g);

/// y[n, co] = sum_ci w[co, ci] (*) x[n, ci]. Weight layout [Cout, Cin, K, K].
Tensor conv2d(const Tensor& x, const Tensor& w, ConvGeometry g);
/// Gradient of conv2d with respect to its input, for an input of `input_shape`.
Tensor conv2d_backward_input(const Tensor& dy, const Tensor& w, ConvGeometry g, const Shape& input_shape);
/// Accumulates the gradient of conv2d with respect to `w` into `dw`.
void conv2d_backward_weight(const Tensor& x, const Tensor& dy, ConvGeometry g, Tensor& dw);

/// Transposed convolution, the adjoint of conv2d. Weight layout [Cin, Cout, K, K];
/// output extent (in - 1) * stride - 2 * pad + K + output_pad.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, ConvGeometry g, std::size_t output_pad);
Tensor conv_transpose2d_backward_input(const Tensor& dy, const Tensor& w, ConvGeometry g);
void conv_transpose2d_backward_weight(const Tensor& x, const Tensor& dy, ConvGeometry g, Tensor& dw);

/// Per-channel KxK convolution, stride 1, no padding. Weight layout [C, 1, K, K].
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w);
Tensor depthwise_conv2d_backward_input(const Tensor& dy, const Tensor& w, const Shape& input_shape);
void depthwise_conv2d_backward_weight(const Tensor& x, const Tensor& dy, Tensor& dw);

/// Mirror padding without edge repetition; requires pad < h and pad < w.
Tensor reflection_pad(const Tensor& x, std::size_t pad);
Tensor reflection_pad_backward(const Tensor& dy, std::size_t pad);

}  // namespace angiogan::kernels
