#include "angiogan/generators.hpp"

#include <algorithm>

#include "angiogan/errors.hpp"

namespace angiogan {

GeneratorConfig GeneratorConfig::coarse(std::size_t input_size, std::size_t base_channels) {
  GeneratorConfig c;
  c.variant = GeneratorVariant::coarse;
  c.input_size = input_size;
  c.base_channels = base_channels;
  c.encoder_blocks = 4;
  c.residual_blocks = 9;
  c.decoder_blocks = 3;
  c.encoder_strides = {1, 2, 2, 2};
  return c;
}

GeneratorConfig GeneratorConfig::fine(std::size_t input_size, std::size_t base_channels) {
  GeneratorConfig c;
  c.variant = GeneratorVariant::fine;
  c.input_size = input_size;
  c.base_channels = base_channels;
  c.encoder_blocks = 2;
  c.residual_blocks = 3;
  c.decoder_blocks = 1;
  c.encoder_strides = {1, 2};
  return c;
}

void GeneratorConfig::validate() const {
  const bool is_coarse = variant == GeneratorVariant::coarse;
  const std::size_t want_enc = is_coarse ? 4 : 2;
  const std::size_t want_res = is_coarse ? 9 : 3;
  const std::size_t want_dec = is_coarse ? 3 : 1;
  if (encoder_blocks != want_enc || residual_blocks != want_res || decoder_blocks != want_dec) {
    throw ConfigError(std::string(is_coarse ? "coarse" : "fine") + " generator needs " + std::to_string(want_enc) +
                      " encoder / " + std::to_string(want_res) + " residual / " + std::to_string(want_dec) +
                      " decoder blocks");
  }
  if (base_channels == 0 || input_channels == 0 || output_channels == 0) {
    throw ConfigError("generator channel counts must be positive");
  }
  if (encoder_strides.size() != encoder_blocks) throw ConfigError("one stride per encoder block is required");
  std::size_t reductions = 0;
  for (std::size_t s : encoder_strides) {
    if (s != 1 && s != 2) throw ConfigError("encoder strides must be 1 or 2");
    reductions += s == 2 ? 1 : 0;
  }
  if (reductions != decoder_blocks) {
    throw ConfigError("stride plan has " + std::to_string(reductions) + " downsampling encoders but " +
                      std::to_string(decoder_blocks) + " decoders; the generator would not preserve size");
  }
  if (input_size == 0 || input_size % (std::size_t{1} << reductions) != 0) {
    throw ConfigError("generator input size " + std::to_string(input_size) + " not divisible by 2^" +
                      std::to_string(reductions));
  }
  if ((deepest_channels() >> decoder_blocks) == 0) throw ConfigError("decoder plan runs out of channels");
  if (first_kernel % 2 == 0 || kernel % 2 == 0 || output_kernel % 2 == 0) {
    throw ConfigError("generator kernels must be odd");
  }
}

std::size_t GeneratorConfig::handoff_size() const {
  std::size_t size = input_size;
  for (std::size_t s : encoder_strides) size /= s;
  return size;
}

void check_generator_pair(const GeneratorConfig& coarse, const GeneratorConfig& fine) {
  coarse.validate();
  fine.validate();
  if (coarse.variant != GeneratorVariant::coarse || fine.variant != GeneratorVariant::fine) {
    throw ConfigError("generator pair must be (coarse, fine)");
  }
  if (coarse.input_size != fine.handoff_size() || coarse.decoder_output_channels() != fine.handoff_channels()) {
    throw ConfigError("coarse feature " + std::to_string(coarse.input_size) + "x" +
                      std::to_string(coarse.decoder_output_channels()) + " does not fit the fine handoff site " +
                      std::to_string(fine.handoff_size()) + "x" + std::to_string(fine.handoff_channels()));
  }
}

Generator::Generator(GeneratorConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::string prefix = config_.variant == GeneratorVariant::coarse ? "coarse" : "fine";
  const double slope = config_.activation_slope;

  std::size_t channels = config_.input_channels;
  for (std::size_t i = 0; i < config_.encoder_blocks; ++i) {
    EncoderBlock::Options opt;
    opt.kernel = i == 0 ? config_.first_kernel : config_.kernel;
    opt.stride = config_.encoder_strides[i];
    opt.activation_slope = slope;
    encoder_.emplace<EncoderBlock>(prefix + ".enc" + std::to_string(i), channels, config_.encoder_channels(i), opt);
    channels = config_.encoder_channels(i);
  }

  ResidualBlockConfig res;
  res.channels = channels;
  res.kernel = config_.kernel;
  res.variant = ResidualVariant::proposed;
  res.activation_slope = slope;
  for (std::size_t i = 0; i < config_.residual_blocks; ++i) {
    residual_.emplace<ResidualBlock>(prefix + ".res" + std::to_string(i), res);
  }

  for (std::size_t i = 0; i < config_.decoder_blocks; ++i) {
    decoder_.emplace<DecoderBlock>(prefix + ".dec" + std::to_string(i), channels, channels / 2, slope);
    channels /= 2;
  }

  head_.emplace<Pad>((config_.output_kernel - 1) / 2, PaddingMode::reflection);
  head_.emplace<Conv2d>(prefix + ".head", channels, config_.output_channels, config_.output_kernel);
  head_.emplace<Tanh>();
}

ParameterList Generator::parameters() {
  ParameterList out;
  encoder_.collect(out);
  residual_.collect(out);
  decoder_.collect(out);
  head_.collect(out);
  return out;
}

std::size_t Generator::parameter_count() { return angiogan::parameter_count(parameters()); }

void Generator::initialize(std::uint64_t seed) { initialize_parameters(parameters(), seed); }

void Generator::check_input(const Tensor& x) const {
  const Shape& s = x.shape();
  if (s.c != config_.input_channels || s.h != config_.input_size || s.w != config_.input_size) {
    throw ConfigError("generator expects [n, " + std::to_string(config_.input_channels) + ", " +
                      std::to_string(config_.input_size) + ", " + std::to_string(config_.input_size) + "], got " +
                      s.str());
  }
}

CoarseOutput Generator::forward_coarse(const Tensor& fundus_half, Pass pass) {
  if (config_.variant != GeneratorVariant::coarse) throw ConfigError("forward_coarse on a fine generator");
  check_input(fundus_half);
  CoarseOutput out;
  out.feature = decoder_.forward(residual_.forward(encoder_.forward(fundus_half, pass), pass), pass);
  out.angiogram = head_.forward(out.feature, pass);
  return out;
}

Tensor Generator::backward_coarse(const Tensor& d_angiogram, const Tensor& d_feature) {
  Tensor g = head_.backward(d_angiogram);
  if (!d_feature.empty()) g += d_feature;
  return encoder_.backward(residual_.backward(decoder_.backward(g)));
}

Tensor Generator::encode(const Tensor& fundus, Pass pass) {
  check_input(fundus);
  return encoder_.forward(fundus, pass);
}

Tensor Generator::forward_from_handoff(const Tensor& handoff, Pass pass) {
  return head_.forward(decoder_.forward(residual_.forward(handoff, pass), pass), pass);
}

Tensor Generator::forward_fine(const Tensor& fundus, const Tensor& coarse_feature, Pass pass) {
  if (config_.variant != GeneratorVariant::fine) throw ConfigError("forward_fine on a coarse generator");
  check_input(fundus);
  const std::size_t size = config_.handoff_size();
  const Shape want{fundus.shape().n, config_.handoff_channels(), size, size};
  if (coarse_feature.shape() != want) {
    throw ConfigError("coarse feature must be " + want.str() + ", got " + coarse_feature.shape().str());
  }
  Tensor h = encoder_.forward(fundus, pass);
  h += coarse_feature;
  return forward_from_handoff(h, pass);
}

Generator::FineGradients Generator::backward_fine(const Tensor& d_angiogram) {
  FineGradients g;
  g.feature = residual_.backward(decoder_.backward(head_.backward(d_angiogram)));
  g.input = encoder_.backward(g.feature);
  return g;
}

CoarseOutput coarse_forward(Generator& coarse, const Tensor& fundus_half, Pass pass) {
  return coarse.forward_coarse(fundus_half, pass);
}

Tensor fine_forward(Generator& fine, const Tensor& fundus, const Tensor& coarse_feature, Pass pass) {
  return fine.forward_fine(fundus, coarse_feature, pass);
}

Generator build_generator(const GeneratorConfig& config, std::uint64_t seed) {
  Generator g(config);
  g.initialize(seed);
  return g;
}

}  // namespace angiogan
