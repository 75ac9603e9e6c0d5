#include "angiogan/model.hpp"

#include "angiogan/errors.hpp"
#include "angiogan/resample.hpp"

namespace angiogan {

ModelConfig ModelConfig::full() { return ModelConfig{}; }

ModelConfig ModelConfig::toy(std::size_t base, std::size_t size) {
  ModelConfig c;
  c.fine = GeneratorConfig::fine(size, base);
  c.coarse = GeneratorConfig::coarse(size / 2, 2 * base);
  c.discriminator_channels = base;
  return c;
}

void ModelConfig::validate() const {
  check_generator_pair(coarse, fine);
  if (discriminator_channels == 0) throw ConfigError("discriminator width must be positive");
  if (fine.input_size % 32 != 0) {
    throw ConfigError("image size must be divisible by 32 so the 1/4 pyramid level survives three stride-2 layers");
  }
}

nlohmann::json to_json(const GeneratorConfig& c) {
  return {{"variant", c.variant == GeneratorVariant::coarse ? "coarse" : "fine"},
          {"input_size", c.input_size},
          {"input_channels", c.input_channels},
          {"output_channels", c.output_channels},
          {"base_channels", c.base_channels},
          {"encoder_blocks", c.encoder_blocks},
          {"residual_blocks", c.residual_blocks},
          {"decoder_blocks", c.decoder_blocks},
          {"encoder_strides", c.encoder_strides},
          {"first_kernel", c.first_kernel},
          {"kernel", c.kernel},
          {"output_kernel", c.output_kernel},
          {"activation_slope", c.activation_slope}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  const auto variant = j.at("variant").get<std::string>();
  if (variant != "coarse" && variant != "fine") throw ConfigError("unknown generator variant " + variant);
  GeneratorConfig c = variant == "coarse" ? GeneratorConfig::coarse() : GeneratorConfig::fine();
  c.input_size = j.value("input_size", c.input_size);
  c.input_channels = j.value("input_channels", c.input_channels);
  c.output_channels = j.value("output_channels", c.output_channels);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.encoder_blocks = j.value("encoder_blocks", c.encoder_blocks);
  c.residual_blocks = j.value("residual_blocks", c.residual_blocks);
  c.decoder_blocks = j.value("decoder_blocks", c.decoder_blocks);
  c.encoder_strides = j.value("encoder_strides", c.encoder_strides);
  c.first_kernel = j.value("first_kernel", c.first_kernel);
  c.kernel = j.value("kernel", c.kernel);
  c.output_kernel = j.value("output_kernel", c.output_kernel);
  c.activation_slope = j.value("activation_slope", c.activation_slope);
  return c;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"coarse", to_json(c.coarse)}, {"fine", to_json(c.fine)}, {"discriminator_channels", c.discriminator_channels}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.coarse = generator_config_from_json(j.at("coarse"));
    c.fine = generator_config_from_json(j.at("fine"));
    c.discriminator_channels = j.value("discriminator_channels", c.discriminator_channels);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
}

std::string_view network_name(NetworkId id) {
  switch (id) {
    case NetworkId::g_coarse:
      return "g_coarse";
    case NetworkId::g_fine:
      return "g_fine";
    case NetworkId::d1_fine:
      return "d1_fine";
    case NetworkId::d2_fine:
      return "d2_fine";
    case NetworkId::d1_coarse:
      return "d1_coarse";
    case NetworkId::d2_coarse:
      return "d2_coarse";
  }
  return "unknown";
}

NetworkId network_of(DiscriminatorId id) {
  return static_cast<NetworkId>(static_cast<std::size_t>(NetworkId::d1_fine) + static_cast<std::size_t>(id));
}

GanModel::GanModel(const ModelConfig& config)
    : coarse((config.validate(), config.coarse)),
      fine(config.fine),
      discriminators(config.fine.input_size, config.discriminator_channels),
      config_(config) {}

void GanModel::initialize(std::uint64_t seed) {
  coarse.initialize(seed);
  fine.initialize(seed + 100);
  discriminators.initialize(seed + 200);
}

ParameterList GanModel::parameters(NetworkId id) {
  switch (id) {
    case NetworkId::g_coarse:
      return coarse.parameters();
    case NetworkId::g_fine:
      return fine.parameters();
    default:
      return discriminators[static_cast<DiscriminatorId>(static_cast<std::size_t>(id) -
                                                         static_cast<std::size_t>(NetworkId::d1_fine))]
          .parameters();
  }
}

Translation translate(GanModel& model, const Tensor& fundus) {
  const Tensor half = downsample2(fundus);
  CoarseOutput c = model.coarse.forward_coarse(half, Pass::inference());
  Translation t;
  t.fine_angiogram = model.fine.forward_fine(fundus, c.feature, Pass::inference());
  t.coarse_angiogram = std::move(c.angiogram);
  return t;
}

}  // namespace angiogan
