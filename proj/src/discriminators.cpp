#include "angiogan/discriminators.hpp"

#include "angiogan/errors.hpp"

namespace angiogan {

void DiscriminatorConfig::validate() const {
  if (encoder_blocks == 0 || base_channels == 0) throw ConfigError("discriminator needs encoders and channels");
  if (input_channels < 2) throw ConfigError("discriminator input must hold a fundus and an angiogram");
  if (input_size == 0 || input_size % (std::size_t{1} << encoder_blocks) != 0) {
    throw ConfigError("discriminator input size " + std::to_string(input_size) + " not divisible by 2^" +
                      std::to_string(encoder_blocks));
  }
  if (kernel % 2 != 0) throw ConfigError("discriminator encoder kernel must be even for exact halving");
  if (final_kernel % 2 == 0) throw ConfigError("discriminator final kernel must be odd");
}

std::string_view discriminator_name(DiscriminatorId id) {
  switch (id) {
    case DiscriminatorId::d1_fine:
      return "d1_fine";
    case DiscriminatorId::d2_fine:
      return "d2_fine";
    case DiscriminatorId::d1_coarse:
      return "d1_coarse";
    case DiscriminatorId::d2_coarse:
      return "d2_coarse";
  }
  return "unknown";
}

std::size_t pyramid_level(DiscriminatorId id) {
  switch (id) {
    case DiscriminatorId::d1_fine:
      return 0;
    case DiscriminatorId::d2_fine:
    case DiscriminatorId::d1_coarse:
      return 1;
    case DiscriminatorId::d2_coarse:
      return 2;
  }
  return 0;
}

bool is_fine_group(DiscriminatorId id) { return id == DiscriminatorId::d1_fine || id == DiscriminatorId::d2_fine; }

Discriminator::Discriminator(const std::string& name, DiscriminatorConfig config) : config_(config) {
  config_.validate();
  std::size_t channels = config_.input_channels;
  for (std::size_t i = 0; i < config_.encoder_blocks; ++i) {
    EncoderBlock::Options opt;
    opt.kernel = config_.kernel;
    opt.stride = 2;
    opt.activation_slope = config_.activation_slope;
    opt.normalize = i > 0;
    opt.padding_mode = PaddingMode::zero;
    const std::size_t out = config_.base_channels << i;
    body_.emplace<EncoderBlock>(name + ".enc" + std::to_string(i), channels, out, opt);
    channels = out;
  }
  body_.emplace<Pad>((config_.final_kernel - 1) / 2, PaddingMode::reflection);
  body_.emplace<Conv2d>(name + ".head", channels, 1, config_.final_kernel);
  body_.emplace<Sigmoid>();
  fundus_channels_ = config_.input_channels - 1;
}

Tensor Discriminator::forward(const Tensor& fundus, const Tensor& angiogram, Pass pass) {
  const Shape& fs = fundus.shape();
  const Shape& as = angiogram.shape();
  if (fs.n != as.n || fs.h != as.h || fs.w != as.w) {
    throw InputError("discriminator inputs disagree: fundus " + fs.str() + ", angiogram " + as.str());
  }
  if (fs.h != config_.input_size || fs.w != config_.input_size) {
    throw InputError("discriminator built for " + std::to_string(config_.input_size) + " px, got " + fs.str());
  }
  if (fs.c + as.c != config_.input_channels) {
    throw ConfigError("discriminator expects " + std::to_string(config_.input_channels) + " input channels");
  }
  fundus_channels_ = fs.c;
  return body_.forward(concat_channels(fundus, angiogram), pass);
}

Discriminator::InputGradients Discriminator::backward(const Tensor& d_map) {
  auto [df, da] = split_channels(body_.backward(d_map), fundus_channels_);
  return {std::move(df), std::move(da)};
}

std::size_t Discriminator::receptive_field() const {
  // Walk back from one output patch: r_in = (r_out - 1) * stride + kernel.
  std::size_t r = config_.final_kernel;
  for (std::size_t i = 0; i < config_.encoder_blocks; ++i) r = (r - 1) * 2 + config_.kernel;
  return r;
}

namespace {

DiscriminatorConfig scaled(std::size_t size, std::size_t base_channels) {
  DiscriminatorConfig c;
  c.input_size = size;
  c.base_channels = base_channels;
  return c;
}

}  // namespace

DiscriminatorSet::DiscriminatorSet(std::size_t base_size, std::size_t base_channels)
    : base_size_(base_size),
      nets_{Discriminator("d1_fine", scaled(base_size, base_channels)),
            Discriminator("d2_fine", scaled(base_size / 2, base_channels)),
            Discriminator("d1_coarse", scaled(base_size / 2, base_channels)),
            Discriminator("d2_coarse", scaled(base_size / 4, base_channels))} {}

void DiscriminatorSet::initialize(std::uint64_t seed) {
  for (DiscriminatorId id : kAllDiscriminators) (*this)[id].initialize(seed + 1 + static_cast<std::size_t>(id));
}

PatchMaps multi_scale_judge(const ImagePyramid& fundus, const ImagePyramid& angiogram, DiscriminatorSet& set,
                            Pass pass) {
  for (std::size_t l = 0; l < 3; ++l) {
    const Shape& fs = fundus.levels[l].shape();
    const Shape& as = angiogram.levels[l].shape();
    if (fs.h != as.h || fs.w != as.w || fs.n != as.n) {
      throw InputError("pyramid level " + std::to_string(l) + " mismatch: " + fs.str() + " vs " + as.str());
    }
  }
  PatchMaps maps;
  for (DiscriminatorId id : kAllDiscriminators) {
    const std::size_t l = pyramid_level(id);
    maps[static_cast<std::size_t>(id)] = set[id].forward(fundus.levels[l], angiogram.levels[l], pass);
  }
  return maps;
}

std::size_t receptive_field_in_original_pixels(const DiscriminatorSet& set, DiscriminatorId id) {
  return set[id].receptive_field() << pyramid_level(id);
}

}  // namespace angiogan
