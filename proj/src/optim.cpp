#include "angiogan/optim.hpp"

#include <cmath>

#include "angiogan/errors.hpp"

namespace angiogan {

void Adam::bind(const ParameterList& params) {
  std::size_t trainable = 0;
  for (const Parameter* p : params) trainable += p->trainable ? 1 : 0;
  if (m_.size() == trainable) {
    std::size_t i = 0;
    for (const Parameter* p : params) {
      if (!p->trainable) continue;
      if (m_[i].shape() != p->value.shape() || v_[i].shape() != p->value.shape()) {
        throw ConfigError("optimizer moments do not match parameter " + p->name);
      }
      ++i;
    }
    return;
  }
  if (!m_.empty()) throw ConfigError("optimizer bound to a different parameter list");
  for (const Parameter* p : params) {
    if (!p->trainable) continue;
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step(const ParameterList& params) {
  bind(params);
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, t);
  const double correction2 = 1.0 - std::pow(b2, t);
  std::size_t slot = 0;
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    Tensor& m = m_[slot];
    Tensor& v = v_[slot];
    ++slot;
    double* w = p->value.data();
    const double* g = p->grad.data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      w[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

}  // namespace angiogan
