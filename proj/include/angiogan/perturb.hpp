#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "angiogan/tensor.hpp"

namespace angiogan {

enum class PerturbationKind { none, blur, sharpen, noise, whirl, pinch };

inline constexpr PerturbationKind kAllPerturbations[] = {PerturbationKind::none,    PerturbationKind::noise,
                                                         PerturbationKind::blur,    PerturbationKind::sharpen,
                                                         PerturbationKind::whirl,   PerturbationKind::pinch};

std::string_view perturbation_name(PerturbationKind kind);
/// Throws ConfigError on an unknown name.
PerturbationKind parse_perturbation(std::string_view name);

/// blur: Gaussian, sigma = amount pixels, truncated at 3 sigma.
/// sharpen: in + amount * (in - blur(in, sigma 2)).
/// noise: additive Gaussian with standard deviation `amount`, seeded.
/// whirl: inverse map, source angle = theta - amount * (1 - d)^2, amount in radians.
/// pinch: inverse map, source radius = r * d^amount, amount in (-0.9, 0.9).
/// For whirl and pinch d = r / (radius_fraction * R_max), R_max is half the
/// shorter side, the disk is centred on the image, and pixels with d > 1 are
/// left alone. Sampling is bilinear with edge clamping.
struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::none;
  double amount = 0.0;
  double radius_fraction = 1.0;
  std::uint64_t seed = 0;

  /// The kind with its default amount: blur 2.0, sharpen 1.0, noise 0.05,
  /// whirl 1.5, pinch 0.5.
  static PerturbationSpec defaults(PerturbationKind kind, std::uint64_t seed = 0);
  void validate() const;
};

nlohmann::json to_json(const PerturbationSpec& spec);
PerturbationSpec perturbation_from_json(const nlohmann::json& j);

/// Applies `spec` to every plane of `image` ([n, c, h, w], values in [-1, 1])
/// and clamps the result to [-1, 1]. Amount 0 returns an exact copy.
Tensor apply_perturbation(const Tensor& image, const PerturbationSpec& spec);

/// Separable Gaussian blur with edge clamping; sigma 0 is the identity.
Tensor gaussian_blur(const Tensor& image, double sigma);
/// Normalized 1-D taps, index 0 at offset -radius.
std::vector<double> gaussian_taps(double sigma);

}  // namespace angiogan
