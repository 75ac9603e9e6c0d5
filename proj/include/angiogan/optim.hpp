#pragma once

#include <cstdint>
#include <vector>

#include "angiogan/layers.hpp"

namespace angiogan {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Holds one (m, v) pair per trainable parameter,
/// in the order of the ParameterList handed to step().
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig config) : config_(config) {}

  void step(const ParameterList& params);

  const AdamConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }

  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void set_steps(std::uint64_t steps) { steps_ = steps; }

  /// Allocates zero moments matching `params`; no-op if already shaped.
  void bind(const ParameterList& params);

 private:
  AdamConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace angiogan
