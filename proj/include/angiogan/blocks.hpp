#pragma once

#include <cstddef>
#include <string>

#include "angiogan/layers.hpp"

namespace angiogan {

enum class ResidualVariant { original, proposed };

struct ResidualBlockConfig {
  std::size_t channels = 32;
  std::size_t kernel = 3;
  ResidualVariant variant = ResidualVariant::proposed;
  double activation_slope = 0.2;
  PaddingMode padding_mode = PaddingMode::reflection;
  double norm_eps = 1e-5;
  double norm_momentum = 0.1;

  /// Throws ConfigError on an even kernel or zero channels.
  void validate() const;
};

struct LayerParameterCount {
  std::size_t convolution_weights = 0;
  std::size_t normalization_params = 0;
  std::size_t total = 0;
};

/// Closed-form count: bias-free convolutions, four values per normalized
/// channel (scale, shift, running mean, running variance).
LayerParameterCount count_parameters(const ResidualBlockConfig& config);

/// Depthwise KxK followed by pointwise 1x1, both bias-free. Unpadded: the
/// caller pads first.
class SeparableConv2d : public Layer {
 public:
  SeparableConv2d(const std::string& name, std::size_t channels, std::size_t kernel);
  Tensor forward(const Tensor& x, Pass pass) override;
  Tensor backward(const Tensor& dy) override;
  void collect(ParameterList& out) override;

  Parameter& depthwise() { return depthwise_.weight(); }
  Parameter& pointwise() { return pointwise_.weight(); }

 private:
  DepthwiseConv2d depthwise_;
  Conv2d pointwise_;
};

/// Functional form of SeparableConv2d. `depthwise` is [C, 1, K, K],
/// `pointwise` is [C, C, 1, 1].
Tensor separable_conv_forward(const Tensor& x, const Tensor& depthwise, const Tensor& pointwise);

/// out = F(x) + x. Proposed F: [pad, conv, norm, leaky] then [pad, separable
/// conv, norm, leaky]. Original F (pre-activation): [norm, relu, pad, conv] twice.
class ResidualBlock : public Layer {
 public:
  ResidualBlock(const std::string& name, const ResidualBlockConfig& config);
  Tensor forward(const Tensor& x, Pass pass) override;
  Tensor backward(const Tensor& dy) override;
  void collect(ParameterList& out) override { body_.collect(out); }

  const ResidualBlockConfig& config() const { return config_; }

 private:
  ResidualBlockConfig config_;
  Sequential body_;
};

/// [pad (K-1)/2, conv(stride), optional norm, leaky].
class EncoderBlock : public Layer {
 public:
  struct Options {
    std::size_t kernel = 3;
    std::size_t stride = 2;
    double activation_slope = 0.2;
    bool normalize = true;
    PaddingMode padding_mode = PaddingMode::reflection;
  };

  EncoderBlock(const std::string& name, std::size_t in_channels, std::size_t out_channels, Options options);
  Tensor forward(const Tensor& x, Pass pass) override;
  Tensor backward(const Tensor& dy) override { return body_.backward(dy); }
  void collect(ParameterList& out) override { body_.collect(out); }

 private:
  Options options_;
  Sequential body_;
};

/// [transposed conv K=3 stride 2, norm, leaky]; doubles the spatial extent.
class DecoderBlock : public Layer {
 public:
  DecoderBlock(const std::string& name, std::size_t in_channels, std::size_t out_channels,
               double activation_slope = 0.2);
  Tensor forward(const Tensor& x, Pass pass) override { return body_.forward(x, pass); }
  Tensor backward(const Tensor& dy) override { return body_.backward(dy); }
  void collect(ParameterList& out) override { body_.collect(out); }

 private:
  Sequential body_;
};

}  // namespace angiogan
