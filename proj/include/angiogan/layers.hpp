#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "angiogan/kernels.hpp"
#include "angiogan/tensor.hpp"

namespace angiogan {

/// A named array owned by a layer. Trainable parameters are touched by the
/// optimizer; tracked ones (batch-norm running statistics) only by forward passes.
struct Parameter {
  enum class Init { normal, ones, zeros, fixed };

  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
  Init init = Init::normal;
};

using ParameterList = std::vector<Parameter*>;

/// How a forward pass treats normalization statistics and activation caches.
struct Pass {
  bool training = false;      // batch statistics instead of running statistics
  bool update_stats = false;  // fold batch statistics into the running ones
  bool record = false;        // keep what backward() needs

  static constexpr Pass inference() { return {false, false, false}; }
  /// Inference statistics, but differentiable.
  static constexpr Pass inference_recorded() { return {false, false, true}; }
  static constexpr Pass train() { return {true, true, true}; }
  /// Batch statistics without touching running statistics; used for networks
  /// that are frozen during another network's update.
  static constexpr Pass frozen() { return {true, false, true}; }
};

enum class PaddingMode { reflection, zero };

/// A differentiable operation. backward() consumes the state recorded by the
/// most recent forward() and accumulates parameter gradients.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, Pass pass) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual void collect(ParameterList& out) { (void)out; }
};

using LayerPtr = std::unique_ptr<Layer>;

class Conv2d : public Layer {
 public:
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         kernels::ConvGeometry geometry = {});
  Tensor forward(const Tensor& x, Pass pass) override;
  Tensor backward(const Tensor& dy) override;
  void collect(ParameterList& out) override { out.push_back(&weight_); }

  Parameter& weight() { return weight_; }

 private:
  Parameter weight_;
  kernels::ConvGeometry geometry_;
  Tensor input_;
};

class ConvTranspose2d : public Layer {
 public:
  ConvTranspose2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                  kernels::ConvGeometry geometry, std::size_t output_pad);
  Tensor forward(const Tensor& x, Pass pass) override;
  Tensor backward(const Tensor& dy) override;
  void collect(ParameterList& out) override { out.push_back(&weight_); }

 private:
  Parameter weight_;
  kernels::ConvGeometry geometry_;
  std::size_t output_pad_;
  Tensor input_;
};

class DepthwiseConv2d : public Layer {
 public:
  DepthwiseConv2d(std::string name, std::size_t channels, std::size_t kernel);
  Tensor forward(const Tensor& x, Pass pass) override;
  Tensor backward(const Tensor& dy) override;
  void collect(ParameterList& out) override { out.push_back(&weight_); }

  Parameter& weight() { return weight_; }

 private:
  Parameter weight_;
  Tensor input_;
};

class Pad : public Layer {
 public:
  Pad(std::size_t width, PaddingMode mode) : width_(width), mode_(mode) {}
  Tensor forward(const Tensor& x, Pass pass) override;
  Tensor backward(const Tensor& dy) override;

 private:
  std::size_t width_;
  PaddingMode mode_;
};

class BatchNorm2d : public Layer {
 public:
  BatchNorm2d(std::string name, std::size_t channels, double eps = 1e-5, double momentum = 0.1);
  Tensor forward(const Tensor& x, Pass pass) override;
  Tensor backward(const Tensor& dy) override;
  void collect(ParameterList& out) override;

  Parameter& scale() { return gamma_; }
  Parameter& shift() { return beta_; }
  Parameter& running_mean() { return running_mean_; }
  Parameter& running_var() { return running_var_; }

 private:
  Parameter gamma_;
  Parameter beta_;
  Parameter running_mean_;
  Parameter running_var_;
  double eps_;
  double momentum_;
  // backward state
  Tensor normalized_;
  std::vector<double> inv_std_;
  bool batch_stats_ = false;
};

/// Negative slope 0 gives the plain rectifier.
class LeakyReLU : public Layer {
 public:
  explicit LeakyReLU(double slope) : slope_(slope) {}
  Tensor forward(const Tensor& x, Pass pass) override;
  Tensor backward(const Tensor& dy) override;

 private:
  double slope_;
  Tensor input_;
};

class Tanh : public Layer {
 public:
  Tensor forward(const Tensor& x, Pass pass) override;
  Tensor backward(const Tensor& dy) override;

 private:
  Tensor output_;
};

class Sigmoid : public Layer {
 public:
  Tensor forward(const Tensor& x, Pass pass) override;
  Tensor backward(const Tensor& dy) override;

 private:
  Tensor output_;
};

class Sequential : public Layer {
 public:
  Sequential() = default;
  Sequential& add(LayerPtr layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }
  template <typename T, typename... Args>
  T& emplace(Args&&... args) {
    auto layer = std::make_unique<T>(std::forward<Args>(args)...);
    T& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor forward(const Tensor& x, Pass pass) override;
  Tensor backward(const Tensor& dy) override;
  void collect(ParameterList& out) override;

  std::size_t size() const { return layers_.size(); }
  Layer& operator[](std::size_t i) { return *layers_[i]; }

 private:
  std::vector<LayerPtr> layers_;
};

/// Parameters of a layer tree, in construction order.
ParameterList parameters_of(Layer& layer);

/// Applies each parameter's Init rule; normal draws are Gaussian(0, std) in
/// list order from a generator seeded with `seed`.
void initialize_parameters(const ParameterList& params, std::uint64_t seed, double std = 0.02);

void zero_gradients(const ParameterList& params);

/// Trainable + tracked element count.
std::size_t parameter_count(const ParameterList& params);

}  // namespace angiogan
