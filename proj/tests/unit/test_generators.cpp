#include <gtest/gtest.h>

#include <algorithm>

#include "angiogan/errors.hpp"
#include "angiogan/generators.hpp"
#include "angiogan/model.hpp"
#include "test_util.hpp"

using namespace angiogan;
using angiogan::testing::dot;
using angiogan::testing::random_tensor;

namespace {

struct ToyPair {
  Generator coarse;
  Generator fine;
};

ToyPair toy_pair(std::uint64_t seed = 1) {
  const ModelConfig cfg = ModelConfig::toy();
  return {build_generator(cfg.coarse, seed), build_generator(cfg.fine, seed + 1)};
}

TEST(GeneratorConfig, PlansMatchVariants) {
  const GeneratorConfig c = GeneratorConfig::coarse();
  EXPECT_EQ(c.input_size, 256u);
  EXPECT_EQ(c.encoder_blocks, 4u);
  EXPECT_EQ(c.residual_blocks, 9u);
  EXPECT_EQ(c.decoder_blocks, 3u);
  EXPECT_EQ(c.deepest_channels(), 512u);
  EXPECT_EQ(c.decoder_output_channels(), 64u);

  const GeneratorConfig f = GeneratorConfig::fine();
  EXPECT_EQ(f.input_size, 512u);
  EXPECT_EQ(f.encoder_blocks, 2u);
  EXPECT_EQ(f.residual_blocks, 3u);
  EXPECT_EQ(f.decoder_blocks, 1u);
  EXPECT_EQ(f.handoff_size(), 256u);
  EXPECT_EQ(f.handoff_channels(), 64u);
  EXPECT_NO_THROW(check_generator_pair(c, f));
}

TEST(GeneratorConfig, InconsistentBlockCountsAreConfigErrors) {
  GeneratorConfig c = GeneratorConfig::coarse();
  c.residual_blocks = 8;
  EXPECT_THROW(c.validate(), ConfigError);
  GeneratorConfig f = GeneratorConfig::fine();
  f.decoder_blocks = 2;
  EXPECT_THROW(f.validate(), ConfigError);
  GeneratorConfig s = GeneratorConfig::fine();
  s.encoder_strides = {2, 2};
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(check_generator_pair(GeneratorConfig::coarse(256, 32), GeneratorConfig::fine()), ConfigError);
}

TEST(Generator, ResidualStageDepth) {
  EXPECT_EQ(Generator(GeneratorConfig::coarse()).residual_block_count(), 9u);
  EXPECT_EQ(Generator(GeneratorConfig::fine()).residual_block_count(), 3u);
}

TEST(Generator, FullScaleShapeContract) {
  Generator coarse = build_generator(GeneratorConfig::coarse(), 1);
  Generator fine = build_generator(GeneratorConfig::fine(), 2);
  const CoarseOutput c = coarse_forward(coarse, random_tensor({1, 3, 256, 256}, 3));
  EXPECT_EQ(c.angiogram.shape(), (Shape{1, 1, 256, 256}));
  EXPECT_EQ(c.feature.shape(), (Shape{1, 64, 256, 256}));
  const Tensor y = fine_forward(fine, random_tensor({1, 3, 512, 512}, 4), c.feature);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 512, 512}));
  EXPECT_GE(min_value(y), -1.0);
  EXPECT_LE(max_value(y), 1.0);
}

TEST(Generator, WrongInputOrFeatureIsConfigError) {
  ToyPair g = toy_pair();
  EXPECT_THROW(coarse_forward(g.coarse, Tensor({1, 3, 64, 64})), ConfigError);
  EXPECT_THROW(coarse_forward(g.coarse, Tensor({1, 1, 32, 32})), ConfigError);
  EXPECT_THROW(fine_forward(g.fine, Tensor({1, 3, 64, 64}), Tensor({1, 4, 32, 32})), ConfigError);
  EXPECT_THROW(fine_forward(g.fine, Tensor({1, 3, 64, 64}), Tensor({1, 8, 16, 16})), ConfigError);
}

TEST(Generator, TanhRangeForLargeWeights) {
  ToyPair g = toy_pair();
  for (Parameter* p : g.coarse.parameters()) {
    if (p->init == Parameter::Init::normal) p->value = random_tensor(p->value.shape(), 5, -2.0, 2.0);
  }
  const CoarseOutput c = coarse_forward(g.coarse, random_tensor({2, 3, 32, 32}, 6, -5.0, 5.0), Pass::train());
  EXPECT_GE(min_value(c.angiogram), -1.0);
  EXPECT_LE(max_value(c.angiogram), 1.0);
}

TEST(Generator, DeterministicInInferenceMode) {
  ToyPair g = toy_pair();
  const Tensor x = random_tensor({1, 3, 32, 32}, 7);
  const CoarseOutput a = coarse_forward(g.coarse, x);
  const CoarseOutput b = coarse_forward(g.coarse, x);
  EXPECT_EQ(a.angiogram, b.angiogram);
  EXPECT_EQ(a.feature, b.feature);
}

TEST(Generator, SeededInitializationIsReproducible) {
  ToyPair a = toy_pair(42);
  ToyPair b = toy_pair(42);
  ToyPair c = toy_pair(43);
  const auto values = [](Generator& g) {
    std::vector<Tensor> v;
    for (const Parameter* p : g.parameters()) v.push_back(p->value);
    return v;
  };
  EXPECT_EQ(values(a.coarse), values(b.coarse));
  EXPECT_EQ(values(a.fine), values(b.fine));
  EXPECT_NE(values(a.coarse), values(c.coarse));
}

TEST(Handoff, ZeroFeatureEqualsFineAlone) {
  ToyPair g = toy_pair();
  const Tensor x = random_tensor({1, 3, 64, 64}, 8);
  const Tensor alone = g.fine.forward_from_handoff(g.fine.encode(x, Pass::inference()), Pass::inference());
  EXPECT_EQ(fine_forward(g.fine, x, Tensor({1, 8, 32, 32})), alone);
}

TEST(Handoff, AdditionAtTheEncoderOutput) {
  ToyPair g = toy_pair();
  const Tensor x = random_tensor({1, 3, 64, 64}, 9);
  const Tensor f = random_tensor({1, 8, 32, 32}, 10);
  Tensor h = g.fine.encode(x, Pass::inference());
  h += f;
  EXPECT_LE(max_abs_diff(fine_forward(g.fine, x, f), g.fine.forward_from_handoff(h, Pass::inference())), 1e-12);
}

TEST(Handoff, OutputDependsOnFeature) {
  ToyPair g = toy_pair();
  const Tensor x = random_tensor({1, 3, 64, 64}, 11);
  const CoarseOutput c = coarse_forward(g.coarse, random_tensor({1, 3, 32, 32}, 12));
  Tensor doubled = c.feature;
  doubled *= 2.0;
  EXPECT_NE(fine_forward(g.fine, x, c.feature), fine_forward(g.fine, x, doubled));
}

TEST(GeneratorGradients, EndToEndMatchesCentralDifferences) {
  ToyPair g = toy_pair(3);
  const Tensor x = random_tensor({2, 3, 64, 64}, 13);
  const Tensor half = random_tensor({2, 3, 32, 32}, 14);
  const Tensor w_fine = random_tensor({2, 1, 64, 64}, 15);
  const Tensor w_coarse = random_tensor({2, 1, 32, 32}, 16);
  const auto loss = [&] {
    const CoarseOutput c = g.coarse.forward_coarse(half, Pass::frozen());
    return dot(g.fine.forward_fine(x, c.feature, Pass::frozen()), w_fine) + dot(c.angiogram, w_coarse);
  };

  ParameterList params = g.coarse.parameters();
  const ParameterList fine_params = g.fine.parameters();
  params.insert(params.end(), fine_params.begin(), fine_params.end());
  zero_gradients(params);
  const CoarseOutput c = g.coarse.forward_coarse(half, Pass::frozen());
  g.fine.forward_fine(x, c.feature, Pass::frozen());
  const Generator::FineGradients fg = g.fine.backward_fine(w_fine);
  g.coarse.backward_coarse(w_coarse, fg.feature);

  angiogan::testing::GradientCheckOptions opt;
  opt.count = 50;
  opt.seed = 17;
  opt.step = 1e-6;
  opt.screen_kinks = true;
  const auto result = angiogan::testing::check_parameter_gradients(params, loss, opt);
  EXPECT_EQ(result.checked, 50u);
  EXPECT_LE(result.skipped_kinks, 25u);
  EXPECT_LE(result.max_relative_error, 1e-3);
}

TEST(GeneratorGradients, EveryParameterReceivesGradient) {
  ToyPair g = toy_pair(4);
  const Tensor x = random_tensor({2, 3, 64, 64}, 18);
  const Tensor half = random_tensor({2, 3, 32, 32}, 19);
  ParameterList params = g.coarse.parameters();
  const ParameterList fine_params = g.fine.parameters();
  params.insert(params.end(), fine_params.begin(), fine_params.end());
  zero_gradients(params);
  const CoarseOutput c = g.coarse.forward_coarse(half, Pass::train());
  const Tensor y = g.fine.forward_fine(x, c.feature, Pass::train());
  const Generator::FineGradients fg = g.fine.backward_fine(random_tensor(y.shape(), 20));
  g.coarse.backward_coarse(random_tensor(c.angiogram.shape(), 21), fg.feature);
  for (const Parameter* p : params) {
    if (!p->trainable) continue;
    const auto values = p->grad.values();
    EXPECT_TRUE(std::any_of(values.begin(), values.end(), [](double v) { return v != 0.0; })) << p->name;
  }
}

}  // namespace
