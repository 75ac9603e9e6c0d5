#pragma once

// Serial, loop-nest implementations written straight from the definitions.
// Slow on purpose; kept for tests and the benchmark baseline.

#include "angiogan/kernels.hpp"

namespace angiogan::kernels::reference {

Tensor conv2d(const Tensor& x, const Tensor& w, ConvGeometry g);
Tensor conv2d_backward_input(const Tensor& dy, const Tensor& w, ConvGeometry g, const Shape& input_shape);
void conv2d_backward_weight(const Tensor& x, const Tensor& dy, ConvGeometry g, Tensor& dw);

/// Scatter form: every input pixel stamps the kernel into the output.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, ConvGeometry g, std::size_t output_pad);

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w);

Tensor reflection_pad(const Tensor& x, std::size_t pad);

}  // namespace angiogan::kernels::reference
