#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "angiogan/blocks.hpp"
#include "angiogan/layers.hpp"

namespace angiogan {

enum class GeneratorVariant { coarse, fine };

/// Layer plan of one generator. Encoder i has base_channels * 2^i output
/// channels; the residual stage runs at the deepest width; each decoder halves
/// the width; a kernel-7 reflection-padded convolution + tanh emits the image.
struct GeneratorConfig {
  GeneratorVariant variant = GeneratorVariant::coarse;
  std::size_t input_size = 256;
  std::size_t input_channels = 3;
  std::size_t output_channels = 1;
  std::size_t base_channels = 64;
  std::size_t encoder_blocks = 4;
  std::size_t residual_blocks = 9;
  std::size_t decoder_blocks = 3;
  /// One entry per encoder block; the first encoder uses first_kernel.
  std::vector<std::size_t> encoder_strides = {1, 2, 2, 2};
  std::size_t first_kernel = 7;
  std::size_t kernel = 3;
  std::size_t output_kernel = 7;
  double activation_slope = 0.2;

  static GeneratorConfig coarse(std::size_t input_size = 256, std::size_t base_channels = 64);
  static GeneratorConfig fine(std::size_t input_size = 512, std::size_t base_channels = 32);

  void validate() const;

  std::size_t encoder_channels(std::size_t i) const { return base_channels << i; }
  std::size_t deepest_channels() const { return encoder_channels(encoder_blocks - 1); }
  /// Channel count after the last decoder (the coarse feature / fine pre-head width).
  std::size_t decoder_output_channels() const { return deepest_channels() >> decoder_blocks; }
  /// Spatial extent and width where the fine generator adds the coarse feature.
  std::size_t handoff_size() const;
  std::size_t handoff_channels() const { return deepest_channels(); }
};

/// Throws ConfigError unless the coarse feature fits the fine handoff site.
void check_generator_pair(const GeneratorConfig& coarse, const GeneratorConfig& fine);

struct CoarseOutput {
  Tensor angiogram;  // [n, 1, S, S], tanh range
  Tensor feature;    // [n, base, S, S], last decoder activation
};

/// Either generator. The coarse network exposes its pre-head feature map; the
/// fine network adds an external feature to its last encoder activation.
class Generator {
 public:
  explicit Generator(GeneratorConfig config);

  const GeneratorConfig& config() const { return config_; }
  ParameterList parameters();
  std::size_t parameter_count();
  std::size_t residual_block_count() const { return residual_.size(); }
  void initialize(std::uint64_t seed);

  CoarseOutput forward_coarse(const Tensor& fundus_half, Pass pass);
  /// Returns the input gradient. `d_feature` may be empty.
  Tensor backward_coarse(const Tensor& d_angiogram, const Tensor& d_feature);

  Tensor forward_fine(const Tensor& fundus, const Tensor& coarse_feature, Pass pass);
  struct FineGradients {
    Tensor input;
    Tensor feature;
  };
  FineGradients backward_fine(const Tensor& d_angiogram);

  /// Encoder stage alone: the activation at the handoff site.
  Tensor encode(const Tensor& fundus, Pass pass);
  /// Everything after the handoff site (residual blocks, decoders, head).
  Tensor forward_from_handoff(const Tensor& handoff, Pass pass);

 private:
  void check_input(const Tensor& x) const;

  GeneratorConfig config_;
  Sequential encoder_;
  Sequential residual_;
  Sequential decoder_;
  Sequential head_;
};

/// Entry points with shape checking.
CoarseOutput coarse_forward(Generator& coarse, const Tensor& fundus_half, Pass pass = Pass::inference());
Tensor fine_forward(Generator& fine, const Tensor& fundus, const Tensor& coarse_feature,
                    Pass pass = Pass::inference());

Generator build_generator(const GeneratorConfig& config, std::uint64_t seed);

}  // namespace angiogan
