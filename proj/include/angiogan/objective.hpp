#pragma once

#include <span>

#include "angiogan/tensor.hpp"

namespace angiogan {

/// Least-squares targets and reconstruction weight. Discriminators push real
/// patches to real_target and fake ones to fake_target_d; generators push fake
/// patches to fake_target_g.
struct ObjectiveConfig {
  double lambda_weight = 10.0;
  double real_target = 1.0;
  double fake_target_d = 0.0;
  double fake_target_g = 1.0;

  void validate() const;
};

/// Mean of (map - target)^2 over every entry of one patch map.
double lsgan_term(const Tensor& map, double target);
/// d lsgan_term / d map.
Tensor lsgan_term_gradient(const Tensor& map, double target);

/// Sum over the group's discriminators of mean (D_real - real)^2 + mean (D_fake - fake_d)^2.
double lsgan_d_loss(std::span<const Tensor> real_maps, std::span<const Tensor> fake_maps, const ObjectiveConfig& cfg);
/// Sum over the group's discriminators of mean (D_fake - fake_g)^2.
double lsgan_g_loss(std::span<const Tensor> fake_maps, const ObjectiveConfig& cfg);

/// Mean squared difference over every pixel and channel.
double recon_l2(const Tensor& generated, const Tensor& real);
Tensor recon_l2_gradient(const Tensor& generated, const Tensor& real);

/// adv_fine + adv_coarse + lambda * (l2_fine + l2_coarse).
double total_generator_objective(double adv_fine, double adv_coarse, double l2_fine, double l2_coarse,
                                 const ObjectiveConfig& cfg);

}  // namespace angiogan
