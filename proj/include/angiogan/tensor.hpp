#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace angiogan {

/// Batch/channel/height/width extent of a tensor.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t size() const noexcept { return n * c * h * w; }
  std::size_t plane() const noexcept { return h * w; }
  std::size_t sample() const noexcept { return c * h * w; }

  bool operator==(const Shape&) const = default;

  std::string str() const;
};

/// Dense NCHW tensor of doubles. Images are tensors with n == 1; network
/// activations carry the mini-batch in n.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  double at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }

  /// Pointer to the (n, c) plane.
  double* plane(std::size_t n, std::size_t c) noexcept {
    return data_.data() + (n * shape_.c + c) * shape_.plane();
  }
  const double* plane(std::size_t n, std::size_t c) const noexcept {
    return data_.data() + (n * shape_.c + c) * shape_.plane();
  }

  void fill(double v);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  /// Copy of samples [first, first + count).
  Tensor slice_batch(std::size_t first, std::size_t count) const;
  /// The single sample `i` as an n == 1 tensor.
  Tensor sample(std::size_t i) const { return slice_batch(i, 1); }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);

/// Concatenate along the channel axis; both tensors must agree on n, h, w.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Split the first `first_channels` channels off; inverse of concat_channels.
std::pair<Tensor, Tensor> split_channels(const Tensor& t, std::size_t first_channels);
/// Stack n == 1 tensors (or general ones) along the batch axis.
Tensor stack_batch(std::span<const Tensor> parts);

double max_abs_diff(const Tensor& a, const Tensor& b);
double sum(const Tensor& t);
double min_value(const Tensor& t);
double max_value(const Tensor& t);
bool all_finite(const Tensor& t);

}  // namespace angiogan
