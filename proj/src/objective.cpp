#include "angiogan/objective.hpp"

#include "angiogan/errors.hpp"

namespace angiogan {

void ObjectiveConfig::validate() const {
  if (!(lambda_weight >= 0.0)) throw ConfigError("lambda must be non-negative");
  for (double t : {real_target, fake_target_d, fake_target_g}) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("least-squares targets must lie in [0, 1]");
  }
}

double lsgan_term(const Tensor& map, double target) {
  if (map.empty()) throw InputError("empty patch map");
  double acc = 0.0;
  for (double v : map.values()) acc += (v - target) * (v - target);
  return acc / static_cast<double>(map.size());
}

Tensor lsgan_term_gradient(const Tensor& map, double target) {
  Tensor g(map.shape());
  const double scale = 2.0 / static_cast<double>(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) g[i] = scale * (map[i] - target);
  return g;
}

double lsgan_d_loss(std::span<const Tensor> real_maps, std::span<const Tensor> fake_maps, const ObjectiveConfig& cfg) {
  if (real_maps.size() != fake_maps.size()) throw InputError("real and fake map groups differ in size");
  double loss = 0.0;
  for (std::size_t i = 0; i < real_maps.size(); ++i) {
    loss += lsgan_term(real_maps[i], cfg.real_target) + lsgan_term(fake_maps[i], cfg.fake_target_d);
  }
  return loss;
}

double lsgan_g_loss(std::span<const Tensor> fake_maps, const ObjectiveConfig& cfg) {
  double loss = 0.0;
  for (const Tensor& m : fake_maps) loss += lsgan_term(m, cfg.fake_target_g);
  return loss;
}

double recon_l2(const Tensor& generated, const Tensor& real) {
  if (generated.shape() != real.shape()) {
    throw InputError("recon_l2 shape mismatch: " + generated.shape().str() + " vs " + real.shape().str());
  }
  if (generated.empty()) throw InputError("recon_l2 on empty images");
  double acc = 0.0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    const double d = generated[i] - real[i];
    acc += d * d;
  }
  return acc / static_cast<double>(generated.size());
}

Tensor recon_l2_gradient(const Tensor& generated, const Tensor& real) {
  if (generated.shape() != real.shape()) throw InputError("recon_l2 shape mismatch");
  Tensor g(generated.shape());
  const double scale = 2.0 / static_cast<double>(generated.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = scale * (generated[i] - real[i]);
  return g;
}

double total_generator_objective(double adv_fine, double adv_coarse, double l2_fine, double l2_coarse,
                                 const ObjectiveConfig& cfg) {
  return adv_fine + adv_coarse + cfg.lambda_weight * (l2_fine + l2_coarse);
}

}  // namespace angiogan
