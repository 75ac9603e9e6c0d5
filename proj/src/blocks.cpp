#include "angiogan/blocks.hpp"

#include "angiogan/errors.hpp"

namespace angiogan {

void ResidualBlockConfig::validate() const {
  if (channels == 0) throw ConfigError("residual block needs at least one channel");
  if (kernel == 0 || kernel % 2 == 0) {
    throw ConfigError("residual block kernel must be odd, got " + std::to_string(kernel));
  }
}

LayerParameterCount count_parameters(const ResidualBlockConfig& config) {
  config.validate();
  const std::size_t c = config.channels;
  const std::size_t kk = config.kernel * config.kernel;
  LayerParameterCount count;
  const std::size_t conv = kk * c * c;
  const std::size_t separable = kk * c + c * c;
  count.convolution_weights = config.variant == ResidualVariant::proposed ? conv + separable : 2 * conv;
  count.normalization_params = 2 * 4 * c;
  count.total = count.convolution_weights + count.normalization_params;
  return count;
}

// --- SeparableConv2d ------------------------------------------------------

SeparableConv2d::SeparableConv2d(const std::string& name, std::size_t channels, std::size_t kernel)
    : depthwise_(name + ".depthwise", channels, kernel), pointwise_(name + ".pointwise", channels, channels, 1) {}

Tensor SeparableConv2d::forward(const Tensor& x, Pass pass) {
  return pointwise_.forward(depthwise_.forward(x, pass), pass);
}

Tensor SeparableConv2d::backward(const Tensor& dy) { return depthwise_.backward(pointwise_.backward(dy)); }

void SeparableConv2d::collect(ParameterList& out) {
  depthwise_.collect(out);
  pointwise_.collect(out);
}

Tensor separable_conv_forward(const Tensor& x, const Tensor& depthwise, const Tensor& pointwise) {
  const std::size_t c = x.shape().c;
  if (depthwise.shape().n != c || pointwise.shape() != Shape{c, c, 1, 1}) {
    throw ConfigError("separable conv weights " + depthwise.shape().str() + " / " + pointwise.shape().str() +
                      " do not match " + std::to_string(c) + " channels");
  }
  return kernels::conv2d(kernels::depthwise_conv2d(x, depthwise), pointwise, {});
}

// --- ResidualBlock --------------------------------------------------------

ResidualBlock::ResidualBlock(const std::string& name, const ResidualBlockConfig& config) : config_(config) {
  config_.validate();
  const std::size_t c = config_.channels;
  const std::size_t k = config_.kernel;
  const std::size_t pad = (k - 1) / 2;
  const double eps = config_.norm_eps;
  const double momentum = config_.norm_momentum;
  if (config_.variant == ResidualVariant::proposed) {
    body_.emplace<Pad>(pad, config_.padding_mode);
    body_.emplace<Conv2d>(name + ".conv", c, c, k);
    body_.emplace<BatchNorm2d>(name + ".norm1", c, eps, momentum);
    body_.emplace<LeakyReLU>(config_.activation_slope);
    body_.emplace<Pad>(pad, config_.padding_mode);
    body_.emplace<SeparableConv2d>(name + ".sepconv", c, k);
    body_.emplace<BatchNorm2d>(name + ".norm2", c, eps, momentum);
    body_.emplace<LeakyReLU>(config_.activation_slope);
  } else {
    body_.emplace<BatchNorm2d>(name + ".norm1", c, eps, momentum);
    body_.emplace<LeakyReLU>(0.0);
    body_.emplace<Pad>(pad, config_.padding_mode);
    body_.emplace<Conv2d>(name + ".conv1", c, c, k);
    body_.emplace<BatchNorm2d>(name + ".norm2", c, eps, momentum);
    body_.emplace<LeakyReLU>(0.0);
    body_.emplace<Pad>(pad, config_.padding_mode);
    body_.emplace<Conv2d>(name + ".conv2", c, c, k);
  }
}

Tensor ResidualBlock::forward(const Tensor& x, Pass pass) {
  const Shape& s = x.shape();
  if (s.c != config_.channels) {
    throw ConfigError("residual block expects " + std::to_string(config_.channels) + " channels, got " +
                      std::to_string(s.c));
  }
  if (s.h < config_.kernel || s.w < config_.kernel) {
    throw InputError("residual block input " + s.str() + " smaller than kernel " + std::to_string(config_.kernel));
  }
  Tensor y = body_.forward(x, pass);
  y += x;
  return y;
}

Tensor ResidualBlock::backward(const Tensor& dy) {
  Tensor dx = body_.backward(dy);
  dx += dy;
  return dx;
}

// --- EncoderBlock / DecoderBlock ------------------------------------------

EncoderBlock::EncoderBlock(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                           Options options)
    : options_(options) {
  if (options_.stride != 1 && options_.stride != 2) {
    throw ConfigError("encoder stride must be 1 or 2, got " + std::to_string(options_.stride));
  }
  body_.emplace<Pad>((options_.kernel - 1) / 2, options_.padding_mode);
  body_.emplace<Conv2d>(name + ".conv", in_channels, out_channels, options_.kernel,
                        kernels::ConvGeometry{options_.stride, 0});
  if (options_.normalize) body_.emplace<BatchNorm2d>(name + ".norm", out_channels);
  body_.emplace<LeakyReLU>(options_.activation_slope);
}

Tensor EncoderBlock::forward(const Tensor& x, Pass pass) {
  const Shape& s = x.shape();
  if (s.h % options_.stride != 0 || s.w % options_.stride != 0) {
    throw InputError("encoder input " + s.str() + " not divisible by stride " + std::to_string(options_.stride));
  }
  return body_.forward(x, pass);
}

DecoderBlock::DecoderBlock(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                           double activation_slope) {
  body_.emplace<ConvTranspose2d>(name + ".deconv", in_channels, out_channels, 3, kernels::ConvGeometry{2, 1}, 1);
  body_.emplace<BatchNorm2d>(name + ".norm", out_channels);
  body_.emplace<LeakyReLU>(activation_slope);
}

}  // namespace angiogan
