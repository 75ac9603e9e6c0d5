#include "angiogan/layers.hpp"

#include <cmath>
#include <random>

#include "angiogan/errors.hpp"

namespace angiogan {
namespace {

Parameter make_parameter(std::string name, Shape shape, Parameter::Init init, bool trainable = true) {
  Parameter p;
  p.name = std::move(name);
  p.value = Tensor(shape);
  p.grad = Tensor(shape);
  p.trainable = trainable;
  p.init = init;
  return p;
}

void require_recorded(const Tensor& cache, const char* layer) {
  if (cache.empty()) throw InputError(std::string(layer) + ": backward() without a recorded forward()");
}

}  // namespace

// --- Conv2d ---------------------------------------------------------------

Conv2d::Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               kernels::ConvGeometry geometry)
    : weight_(make_parameter(std::move(name) + ".weight", {out_channels, in_channels, kernel, kernel},
                             Parameter::Init::normal)),
      geometry_(geometry) {}

Tensor Conv2d::forward(const Tensor& x, Pass pass) {
  input_ = pass.record ? x : Tensor();
  return kernels::conv2d(x, weight_.value, geometry_);
}

Tensor Conv2d::backward(const Tensor& dy) {
  require_recorded(input_, "Conv2d");
  kernels::conv2d_backward_weight(input_, dy, geometry_, weight_.grad);
  return kernels::conv2d_backward_input(dy, weight_.value, geometry_, input_.shape());
}

// --- ConvTranspose2d ------------------------------------------------------

ConvTranspose2d::ConvTranspose2d(std::string name, std::size_t in_channels, std::size_t out_channels,
                                 std::size_t kernel, kernels::ConvGeometry geometry, std::size_t output_pad)
    : weight_(make_parameter(std::move(name) + ".weight", {in_channels, out_channels, kernel, kernel},
                             Parameter::Init::normal)),
      geometry_(geometry),
      output_pad_(output_pad) {}

Tensor ConvTranspose2d::forward(const Tensor& x, Pass pass) {
  input_ = pass.record ? x : Tensor();
  return kernels::conv_transpose2d(x, weight_.value, geometry_, output_pad_);
}

Tensor ConvTranspose2d::backward(const Tensor& dy) {
  require_recorded(input_, "ConvTranspose2d");
  kernels::conv_transpose2d_backward_weight(input_, dy, geometry_, weight_.grad);
  return kernels::conv_transpose2d_backward_input(dy, weight_.value, geometry_);
}

// --- DepthwiseConv2d ------------------------------------------------------

DepthwiseConv2d::DepthwiseConv2d(std::string name, std::size_t channels, std::size_t kernel)
    : weight_(make_parameter(std::move(name) + ".weight", {channels, 1, kernel, kernel}, Parameter::Init::normal)) {}

Tensor DepthwiseConv2d::forward(const Tensor& x, Pass pass) {
  input_ = pass.record ? x : Tensor();
  return kernels::depthwise_conv2d(x, weight_.value);
}

Tensor DepthwiseConv2d::backward(const Tensor& dy) {
  require_recorded(input_, "DepthwiseConv2d");
  kernels::depthwise_conv2d_backward_weight(input_, dy, weight_.grad);
  return kernels::depthwise_conv2d_backward_input(dy, weight_.value, input_.shape());
}

// --- Pad ------------------------------------------------------------------

Tensor Pad::forward(const Tensor& x, Pass) {
  if (width_ == 0) return x;
  if (mode_ == PaddingMode::reflection) return kernels::reflection_pad(x, width_);
  const Shape& s = x.shape();
  Tensor y({s.n, s.c, s.h + 2 * width_, s.w + 2 * width_});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < s.h; ++i)
        std::copy_n(x.plane(n, c) + i * s.w, s.w, y.plane(n, c) + (i + width_) * y.shape().w + width_);
  return y;
}

Tensor Pad::backward(const Tensor& dy) {
  if (width_ == 0) return dy;
  if (mode_ == PaddingMode::reflection) return kernels::reflection_pad_backward(dy, width_);
  const Shape& ps = dy.shape();
  Tensor dx({ps.n, ps.c, ps.h - 2 * width_, ps.w - 2 * width_});
  const Shape& s = dx.shape();
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < s.h; ++i)
        std::copy_n(dy.plane(n, c) + (i + width_) * ps.w + width_, s.w, dx.plane(n, c) + i * s.w);
  return dx;
}

// --- BatchNorm2d ----------------------------------------------------------

BatchNorm2d::BatchNorm2d(std::string name, std::size_t channels, double eps, double momentum)
    : gamma_(make_parameter(name + ".scale", {channels, 1, 1, 1}, Parameter::Init::ones)),
      beta_(make_parameter(name + ".shift", {channels, 1, 1, 1}, Parameter::Init::zeros)),
      running_mean_(make_parameter(name + ".running_mean", {channels, 1, 1, 1}, Parameter::Init::zeros, false)),
      running_var_(make_parameter(name + ".running_var", {channels, 1, 1, 1}, Parameter::Init::ones, false)),
      eps_(eps),
      momentum_(momentum) {
  gamma_.value.fill(1.0);
  running_var_.value.fill(1.0);
}

void BatchNorm2d::collect(ParameterList& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
  out.push_back(&running_mean_);
  out.push_back(&running_var_);
}

Tensor BatchNorm2d::forward(const Tensor& x, Pass pass) {
  const Shape& s = x.shape();
  const std::size_t channels = gamma_.value.size();
  if (s.c != channels) {
    throw ConfigError(gamma_.name + ": expected " + std::to_string(channels) + " channels, got " + std::to_string(s.c));
  }
  const std::size_t count = s.n * s.plane();
  Tensor y(s);
  Tensor normalized = pass.record ? Tensor(s) : Tensor();
  std::vector<double> inv_std(channels);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(channels); ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    double mean = 0.0;
    double var = 0.0;
    if (pass.training) {
      for (std::size_t n = 0; n < s.n; ++n) {
        const double* p = x.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) mean += p[i];
      }
      mean /= static_cast<double>(count);
      for (std::size_t n = 0; n < s.n; ++n) {
        const double* p = x.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) var += (p[i] - mean) * (p[i] - mean);
      }
      const double biased = var / static_cast<double>(count);
      if (pass.update_stats) {
        const double unbiased = count > 1 ? var / static_cast<double>(count - 1) : biased;
        running_mean_.value[c] = (1.0 - momentum_) * running_mean_.value[c] + momentum_ * mean;
        running_var_.value[c] = (1.0 - momentum_) * running_var_.value[c] + momentum_ * unbiased;
      }
      var = biased;
    } else {
      mean = running_mean_.value[c];
      var = running_var_.value[c];
    }
    const double istd = 1.0 / std::sqrt(var + eps_);
    inv_std[c] = istd;
    const double g = gamma_.value[c];
    const double b = beta_.value[c];
    for (std::size_t n = 0; n < s.n; ++n) {
      const double* p = x.plane(n, c);
      double* q = y.plane(n, c);
      double* z = pass.record ? normalized.plane(n, c) : nullptr;
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const double xhat = (p[i] - mean) * istd;
        if (z) z[i] = xhat;
        q[i] = g * xhat + b;
      }
    }
  }
  normalized_ = std::move(normalized);
  inv_std_ = std::move(inv_std);
  batch_stats_ = pass.training;
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  require_recorded(normalized_, "BatchNorm2d");
  const Shape& s = dy.shape();
  const std::size_t channels = gamma_.value.size();
  const auto count = static_cast<double>(s.n * s.plane());
  Tensor dx(s);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(channels); ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const double* g = dy.plane(n, c);
      const double* z = normalized_.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        sum_dy += g[i];
        sum_dy_xhat += g[i] * z[i];
      }
    }
    gamma_.grad[c] += sum_dy_xhat;
    beta_.grad[c] += sum_dy;
    const double k = gamma_.value[c] * inv_std_[c];
    const double mean_dy = batch_stats_ ? sum_dy / count : 0.0;
    const double mean_dy_xhat = batch_stats_ ? sum_dy_xhat / count : 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const double* g = dy.plane(n, c);
      const double* z = normalized_.plane(n, c);
      double* out = dx.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) out[i] = k * (g[i] - mean_dy - z[i] * mean_dy_xhat);
    }
  }
  return dx;
}

// --- activations ----------------------------------------------------------

Tensor LeakyReLU::forward(const Tensor& x, Pass pass) {
  input_ = pass.record ? x : Tensor();
  Tensor y = x;
  double* v = y.data();
  const auto n = static_cast<std::ptrdiff_t>(y.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) v[i] = v[i] > 0.0 ? v[i] : slope_ * v[i];
  return y;
}

Tensor LeakyReLU::backward(const Tensor& dy) {
  require_recorded(input_, "LeakyReLU");
  Tensor dx = dy;
  double* g = dx.data();
  const double* x = input_.data();
  const auto n = static_cast<std::ptrdiff_t>(dx.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) g[i] = x[i] > 0.0 ? g[i] : slope_ * g[i];
  return dx;
}

Tensor Tanh::forward(const Tensor& x, Pass pass) {
  Tensor y = x;
  double* v = y.data();
  const auto n = static_cast<std::ptrdiff_t>(y.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) v[i] = std::tanh(v[i]);
  output_ = pass.record ? y : Tensor();
  return y;
}

Tensor Tanh::backward(const Tensor& dy) {
  require_recorded(output_, "Tanh");
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= 1.0 - output_[i] * output_[i];
  return dx;
}

Tensor Sigmoid::forward(const Tensor& x, Pass pass) {
  Tensor y = x;
  double* v = y.data();
  const auto n = static_cast<std::ptrdiff_t>(y.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) v[i] = 1.0 / (1.0 + std::exp(-v[i]));
  output_ = pass.record ? y : Tensor();
  return y;
}

Tensor Sigmoid::backward(const Tensor& dy) {
  require_recorded(output_, "Sigmoid");
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= output_[i] * (1.0 - output_[i]);
  return dx;
}

// --- Sequential -----------------------------------------------------------

Tensor Sequential::forward(const Tensor& x, Pass pass) {
  Tensor h = x;
  for (auto& layer : layers_) h = layer->forward(h, pass);
  return h;
}

Tensor Sequential::backward(const Tensor& dy) {
  Tensor g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

void Sequential::collect(ParameterList& out) {
  for (auto& layer : layers_) layer->collect(out);
}

// --- parameter utilities --------------------------------------------------

ParameterList parameters_of(Layer& layer) {
  ParameterList out;
  layer.collect(out);
  return out;
}

void initialize_parameters(const ParameterList& params, std::uint64_t seed, double std) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std);
  for (Parameter* p : params) {
    switch (p->init) {
      case Parameter::Init::normal:
        for (double& v : p->value.values()) v = normal(rng);
        break;
      case Parameter::Init::ones:
        p->value.fill(1.0);
        break;
      case Parameter::Init::zeros:
        p->value.fill(0.0);
        break;
      case Parameter::Init::fixed:
        break;
    }
    p->grad.fill(0.0);
  }
}

void zero_gradients(const ParameterList& params) {
  for (Parameter* p : params) p->grad.fill(0.0);
}

std::size_t parameter_count(const ParameterList& params) {
  std::size_t total = 0;
  for (const Parameter* p : params) total += p->value.size();
  return total;
}

}  // namespace angiogan
