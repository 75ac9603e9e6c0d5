#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include <json.hpp>

#include "angiogan/discriminators.hpp"
#include "angiogan/generators.hpp"

namespace angiogan {

/// Shapes of all six networks.
struct ModelConfig {
  GeneratorConfig coarse = GeneratorConfig::coarse();
  GeneratorConfig fine = GeneratorConfig::fine();
  std::size_t discriminator_channels = 64;

  /// 512/256 generators, 64-channel discriminators.
  static ModelConfig full();
  /// Proportional small model: fine input `size`, coarse input size/2, fine
  /// width `base`, coarse width 2*base (so its feature fits the fine handoff),
  /// discriminator width `base`.
  static ModelConfig toy(std::size_t base = 4, std::size_t size = 64);

  std::size_t image_size() const { return fine.input_size; }
  void validate() const;
};

nlohmann::json to_json(const GeneratorConfig& c);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

enum class NetworkId : std::size_t { g_coarse = 0, g_fine, d1_fine, d2_fine, d1_coarse, d2_coarse };

inline constexpr std::array<NetworkId, 6> kAllNetworks = {NetworkId::g_coarse,  NetworkId::g_fine,
                                                          NetworkId::d1_fine,   NetworkId::d2_fine,
                                                          NetworkId::d1_coarse, NetworkId::d2_coarse};

std::string_view network_name(NetworkId id);
NetworkId network_of(DiscriminatorId id);

/// The two generators and four discriminators.
class GanModel {
 public:
  explicit GanModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  void initialize(std::uint64_t seed);

  ParameterList parameters(NetworkId id);
  std::size_t parameter_count(NetworkId id) { return angiogan::parameter_count(parameters(id)); }

  Generator coarse;
  Generator fine;
  DiscriminatorSet discriminators;

 private:
  ModelConfig config_;
};

struct Translation {
  Tensor coarse_angiogram;
  Tensor fine_angiogram;
};

/// Fundus [n, 3, S, S] in [-1, 1] -> Lanczos half-size input to the coarse
/// generator -> fine generator with the coarse feature. Inference statistics.
Translation translate(GanModel& model, const Tensor& fundus);

}  // namespace angiogan
