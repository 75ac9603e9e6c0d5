#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>

#include "angiogan/blocks.hpp"
#include "angiogan/resample.hpp"

namespace angiogan {

/// Conditional patch discriminator: [fundus, angiogram] concatenated on
/// channels, `encoder_blocks` kernel-4 stride-2 encoders (no norm on the first),
/// a kernel-3 reflection-padded convolution to one channel, then sigmoid.
struct DiscriminatorConfig {
  std::size_t input_size = 512;
  std::size_t input_channels = 4;
  std::size_t encoder_blocks = 3;
  std::size_t base_channels = 64;
  std::size_t kernel = 4;
  std::size_t final_kernel = 3;
  double activation_slope = 0.2;

  std::size_t patch_output_size() const { return input_size >> encoder_blocks; }
  void validate() const;
};

enum class DiscriminatorId : std::size_t { d1_fine = 0, d2_fine = 1, d1_coarse = 2, d2_coarse = 3 };

inline constexpr std::array<DiscriminatorId, 4> kAllDiscriminators = {
    DiscriminatorId::d1_fine, DiscriminatorId::d2_fine, DiscriminatorId::d1_coarse, DiscriminatorId::d2_coarse};

std::string_view discriminator_name(DiscriminatorId id);
/// Pyramid level each discriminator judges: 0, 1, 1, 2.
std::size_t pyramid_level(DiscriminatorId id);
bool is_fine_group(DiscriminatorId id);

class Discriminator {
 public:
  Discriminator(const std::string& name, DiscriminatorConfig config);

  const DiscriminatorConfig& config() const { return config_; }
  ParameterList parameters() { return parameters_of(body_); }
  std::size_t parameter_count() { return angiogan::parameter_count(parameters()); }
  void initialize(std::uint64_t seed) { initialize_parameters(parameters(), seed); }

  /// Patch map [n, 1, P, P] with entries in (0, 1).
  Tensor forward(const Tensor& fundus, const Tensor& angiogram, Pass pass);

  struct InputGradients {
    Tensor fundus;
    Tensor angiogram;
  };
  InputGradients backward(const Tensor& d_map);

  /// Receptive field of one patch, in pixels of this discriminator's input.
  std::size_t receptive_field() const;

 private:
  DiscriminatorConfig config_;
  Sequential body_;
  std::size_t fundus_channels_ = 3;
};

/// Four independent discriminators. The toy constructor scales every input
/// size from a base resolution other than 512.
class DiscriminatorSet {
 public:
  explicit DiscriminatorSet(std::size_t base_size = 512, std::size_t base_channels = 64);

  Discriminator& operator[](DiscriminatorId id) { return nets_[static_cast<std::size_t>(id)]; }
  const Discriminator& operator[](DiscriminatorId id) const { return nets_[static_cast<std::size_t>(id)]; }
  std::size_t base_size() const { return base_size_; }

  void initialize(std::uint64_t seed);

 private:
  std::size_t base_size_;
  std::array<Discriminator, 4> nets_;
};

/// Patch maps indexed by DiscriminatorId.
using PatchMaps = std::array<Tensor, 4>;

PatchMaps multi_scale_judge(const ImagePyramid& fundus, const ImagePyramid& angiogram, DiscriminatorSet& set,
                            Pass pass = Pass::inference());

/// Receptive field of `id` measured in full-resolution pixels.
std::size_t receptive_field_in_original_pixels(const DiscriminatorSet& set, DiscriminatorId id);

}  // namespace angiogan
