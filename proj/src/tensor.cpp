#include "angiogan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "angiogan/errors.hpp"

namespace angiogan {

std::string Shape::str() const {
  return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw InputError("tensor data size " + std::to_string(data_.size()) + " does not match shape " + shape_.str());
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw InputError("tensor add: shape " + other.shape_.str() + " vs " + shape_.str());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor Tensor::slice_batch(std::size_t first, std::size_t count) const {
  if (first + count > shape_.n) throw InputError("batch slice out of range");
  Shape s = shape_;
  s.n = count;
  const auto begin = data_.begin() + static_cast<std::ptrdiff_t>(first * shape_.sample());
  return Tensor(s, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * shape_.sample())));
}

Tensor operator+(Tensor a, const Tensor& b) {
  a += b;
  return a;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw InputError("concat_channels: " + sa.str() + " vs " + sb.str());
  }
  Tensor out({sa.n, sa.c + sb.c, sa.h, sa.w});
  for (std::size_t n = 0; n < sa.n; ++n) {
    std::copy_n(a.plane(n, 0), sa.sample(), out.plane(n, 0));
    std::copy_n(b.plane(n, 0), sb.sample(), out.plane(n, sa.c));
  }
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& t, std::size_t first_channels) {
  const Shape& s = t.shape();
  if (first_channels > s.c) throw InputError("split_channels: too many channels requested");
  Tensor a({s.n, first_channels, s.h, s.w});
  Tensor b({s.n, s.c - first_channels, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    std::copy_n(t.plane(n, 0), a.shape().sample(), a.plane(n, 0));
    std::copy_n(t.plane(n, first_channels), b.shape().sample(), b.plane(n, 0));
  }
  return {std::move(a), std::move(b)};
}

Tensor stack_batch(std::span<const Tensor> parts) {
  if (parts.empty()) throw InputError("stack_batch: no tensors");
  Shape s = parts.front().shape();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    const Shape& ps = p.shape();
    if (ps.c != s.c || ps.h != s.h || ps.w != s.w) {
      throw InputError("stack_batch: " + ps.str() + " vs " + s.str());
    }
    total += ps.n;
  }
  std::vector<double> data;
  data.reserve(total * s.sample());
  for (const Tensor& p : parts) data.insert(data.end(), p.values().begin(), p.values().end());
  s.n = total;
  return Tensor(s, std::move(data));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v;
  return s;
}

double min_value(const Tensor& t) {
  return t.empty() ? 0.0 : *std::min_element(t.values().begin(), t.values().end());
}

double max_value(const Tensor& t) {
  return t.empty() ? 0.0 : *std::max_element(t.values().begin(), t.values().end());
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace angiogan
