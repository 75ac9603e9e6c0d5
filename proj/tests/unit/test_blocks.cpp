#include <gtest/gtest.h>

#include <cmath>

#include "angiogan/blocks.hpp"
#include "angiogan/errors.hpp"
#include "test_util.hpp"

using namespace angiogan;
using angiogan::testing::check_parameter_gradients;
using angiogan::testing::dot;
using angiogan::testing::random_tensor;

namespace {

ResidualBlockConfig block_config(std::size_t c, std::size_t k, ResidualVariant v = ResidualVariant::proposed) {
  ResidualBlockConfig cfg;
  cfg.channels = c;
  cfg.kernel = k;
  cfg.variant = v;
  return cfg;
}

TEST(CountParameters, ThirtyTwoChannelTotals) {
  EXPECT_EQ(count_parameters(block_config(32, 3)).total, 10784u);
  EXPECT_EQ(count_parameters(block_config(32, 3, ResidualVariant::original)).total, 18688u);
}

TEST(CountParameters, SingleChannelHandCount) {
  const LayerParameterCount c = count_parameters(block_config(1, 3));
  EXPECT_EQ(c.convolution_weights, 9u + 9u + 1u);
  EXPECT_EQ(c.normalization_params, 8u);
  EXPECT_EQ(c.total, 27u);
  EXPECT_EQ(c.total, c.convolution_weights + c.normalization_params);
}

TEST(CountParameters, SeparableConvIsKKCPlusCC) {
  SeparableConv2d sep("sep", 32, 3);
  EXPECT_EQ(parameter_count(parameters_of(sep)), 288u + 1024u);
}

TEST(CountParameters, AgreesWithBuiltBlocks) {
  for (auto variant : {ResidualVariant::proposed, ResidualVariant::original}) {
    for (std::size_t c : {1u, 4u, 32u}) {
      for (std::size_t k : {1u, 3u, 5u}) {
        ResidualBlock block("b", block_config(c, k, variant));
        EXPECT_EQ(parameter_count(parameters_of(block)), count_parameters(block_config(c, k, variant)).total);
      }
    }
  }
}

TEST(ResidualBlockConfig, RejectsEvenKernelAndZeroChannels) {
  EXPECT_THROW(count_parameters(block_config(4, 2)), ConfigError);
  EXPECT_THROW(count_parameters(block_config(0, 3)), ConfigError);
}

TEST(SeparableConv, UnitExample) {
  const Tensor x({1, 1, 1, 1}, std::vector<double>{1.0});
  const Tensor dw({1, 1, 1, 1}, std::vector<double>{2.0});
  const Tensor pw({1, 1, 1, 1}, std::vector<double>{3.0});
  EXPECT_DOUBLE_EQ(separable_conv_forward(x, dw, pw)[0], 6.0);
}

TEST(SeparableConv, ZeroWeightsGiveZero) {
  const Tensor x = random_tensor({2, 4, 8, 8}, 1);
  const Tensor y = separable_conv_forward(x, Tensor({4, 1, 3, 3}), Tensor({4, 4, 1, 1}));
  EXPECT_EQ(max_value(y), 0.0);
  EXPECT_EQ(min_value(y), 0.0);
}

TEST(SeparableConv, MatchesDirectComposition) {
  // Independent oracle: per-channel KxK loop, then a 1x1 channel mix.
  const std::size_t c = 4;
  const std::size_t k = 3;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor x = random_tensor({1, c, 8, 8}, 100 + seed);
    const Tensor dw = random_tensor({c, 1, k, k}, 200 + seed);
    const Tensor pw = random_tensor({c, c, 1, 1}, 300 + seed);
    const Tensor y = separable_conv_forward(x, dw, pw);
    const std::size_t o = 8 - k + 1;
    ASSERT_EQ(y.shape(), (Shape{1, c, o, o}));
    for (std::size_t co = 0; co < c; ++co)
      for (std::size_t i = 0; i < o; ++i)
        for (std::size_t j = 0; j < o; ++j) {
          double expect = 0.0;
          for (std::size_t ci = 0; ci < c; ++ci) {
            double depth = 0.0;
            for (std::size_t a = 0; a < k; ++a)
              for (std::size_t b = 0; b < k; ++b) depth += dw.at(ci, 0, a, b) * x.at(0, ci, i + a, j + b);
            expect += pw.at(co, ci, 0, 0) * depth;
          }
          EXPECT_NEAR(y.at(0, co, i, j), expect, 1e-10);
        }
  }
}

TEST(SeparableConv, ChannelMismatchIsConfigError) {
  EXPECT_THROW(separable_conv_forward(Tensor({1, 3, 4, 4}), Tensor({4, 1, 3, 3}), Tensor({4, 4, 1, 1})),
               ConfigError);
}

TEST(ResidualBlock, ZeroWeightsGiveIdentity) {
  for (auto variant : {ResidualVariant::proposed, ResidualVariant::original}) {
    ResidualBlock block("b", block_config(4, 3, variant));
    for (Parameter* p : parameters_of(block)) {
      if (p->init == Parameter::Init::normal) p->value.fill(0.0);
    }
    const Tensor x = random_tensor({2, 4, 8, 8}, 7);
    if (variant == ResidualVariant::proposed) {
      EXPECT_EQ(block.forward(x, Pass::train()), x);
      EXPECT_EQ(block.forward(x, Pass::inference()), x);
    } else {
      // Pre-activation ends in a convolution, so zero weights still give F = 0.
      EXPECT_EQ(block.forward(x, Pass::inference()), x);
    }
  }
}

TEST(ResidualBlock, ScalarHandTraceInInferenceMode) {
  ResidualBlock block("b", block_config(1, 1));
  const ParameterList p = parameters_of(block);
  // conv, norm1 (scale, shift, mean, var), depthwise, pointwise, norm2 (...)
  ASSERT_EQ(p.size(), 11u);
  const double conv = 1.5, s1 = 1.2, b1 = -0.1, m1 = 0.2, v1 = 0.5;
  const double depth = 0.8, point = -1.1, s2 = 0.9, b2 = 0.05, m2 = 0.1, v2 = 2.0;
  const double values[] = {conv, s1, b1, m1, v1, depth, point, s2, b2, m2, v2};
  for (std::size_t i = 0; i < p.size(); ++i) p[i]->value.fill(values[i]);

  const auto leaky = [](double v) { return v > 0 ? v : 0.2 * v; };
  for (double x : {0.7, -0.4}) {
    double h = x * conv;
    h = leaky(s1 * (h - m1) / std::sqrt(v1 + 1e-5) + b1);
    h = h * depth * point;
    h = leaky(s2 * (h - m2) / std::sqrt(v2 + 1e-5) + b2);
    const double expect = h + x;
    const Tensor out = block.forward(Tensor({1, 1, 1, 1}, std::vector<double>{x}), Pass::inference());
    EXPECT_NEAR(out[0], expect, 1e-14) << "x=" << x;
  }
}

TEST(ResidualBlock, Deterministic) {
  ResidualBlock block("b", block_config(4, 3));
  initialize_parameters(parameters_of(block), 3);
  const Tensor x = random_tensor({2, 4, 8, 8}, 4);
  EXPECT_EQ(block.forward(x, Pass::frozen()), block.forward(x, Pass::frozen()));
}

TEST(ResidualBlock, PreservesShape) {
  for (std::size_t c : {1u, 4u, 32u}) {
    for (std::size_t s : {8u, 16u, 64u}) {
      ResidualBlock block("b", block_config(c, 3));
      initialize_parameters(parameters_of(block), c + s);
      const Tensor x = random_tensor({1, c, s, s}, s);
      EXPECT_EQ(block.forward(x, Pass::train()).shape(), x.shape());
    }
  }
}

TEST(ResidualBlock, ErrorContract) {
  ResidualBlock block("b", block_config(4, 3));
  EXPECT_THROW(block.forward(Tensor({1, 3, 8, 8}), Pass::inference()), ConfigError);
  EXPECT_THROW(block.forward(Tensor({1, 4, 2, 2}), Pass::inference()), InputError);
}

TEST(ResidualBlock, GradientMatchesCentralDifferences) {
  for (auto variant : {ResidualVariant::proposed, ResidualVariant::original}) {
    ResidualBlock block("b", block_config(4, 3, variant));
    const ParameterList params = parameters_of(block);
    initialize_parameters(params, 11, 0.3);
    // Move norm scale/shift off their defaults so their gradients are generic.
    for (Parameter* p : params) {
      if (p->init == Parameter::Init::ones || p->init == Parameter::Init::zeros) {
        if (p->trainable) p->value = random_tensor(p->value.shape(), 12, 0.5, 1.5);
      }
    }
    const Tensor x = random_tensor({2, 4, 8, 8}, 13);
    const Tensor weights = random_tensor(x.shape(), 14);
    const auto loss = [&] { return dot(block.forward(x, Pass::frozen()), weights); };

    zero_gradients(params);
    block.forward(x, Pass::frozen());
    const Tensor dx = block.backward(weights);
    const auto result = check_parameter_gradients(params, loss, 0, 15);
    EXPECT_GT(result.checked, 0u);
    EXPECT_LE(result.max_relative_error, 1e-4) << (variant == ResidualVariant::proposed ? "proposed" : "original");

    // Input gradient at a few coordinates.
    Tensor xp = x;
    for (std::size_t i : {0u, 37u, 200u, 511u}) {
      const double h = 1e-5;
      xp[i] = x[i] + h;
      const double plus = dot(block.forward(xp, Pass::frozen()), weights);
      xp[i] = x[i] - h;
      const double minus = dot(block.forward(xp, Pass::frozen()), weights);
      xp[i] = x[i];
      EXPECT_LE(angiogan::testing::relative_error(dx[i], (plus - minus) / (2 * h)), 1e-4);
    }
  }
}

TEST(EncoderBlock, ShapeContract) {
  const auto run = [](Shape in, std::size_t out_c, std::size_t stride, std::size_t kernel) {
    EncoderBlock::Options opt;
    opt.stride = stride;
    opt.kernel = kernel;
    EncoderBlock enc("e", in.c, out_c, opt);
    initialize_parameters(parameters_of(enc), 1);
    return enc.forward(Tensor(in), Pass::inference()).shape();
  };
  EXPECT_EQ(run({1, 3, 256, 256}, 64, 1, 7), (Shape{1, 64, 256, 256}));
  EXPECT_EQ(run({1, 64, 256, 256}, 128, 2, 3), (Shape{1, 128, 128, 128}));
  EXPECT_EQ(run({1, 32, 512, 512}, 64, 2, 3), (Shape{1, 64, 256, 256}));
}

TEST(EncoderBlock, OddExtentWithStrideTwoIsInputError) {
  EncoderBlock enc("e", 2, 4, {});
  EXPECT_THROW(enc.forward(Tensor({1, 2, 9, 8}), Pass::inference()), InputError);
  EncoderBlock::Options bad;
  bad.stride = 3;
  EXPECT_THROW(EncoderBlock("e", 2, 4, bad), ConfigError);
}

TEST(DecoderBlock, ShapeContractAndRoundTrip) {
  DecoderBlock dec("d", 512, 256);
  EXPECT_EQ(dec.forward(Tensor({1, 512, 64, 64}), Pass::inference()).shape(), (Shape{1, 256, 128, 128}));
  DecoderBlock dec2("d2", 256, 128);
  EXPECT_EQ(dec2.forward(Tensor({1, 256, 128, 128}), Pass::inference()).shape(), (Shape{1, 128, 256, 256}));

  DecoderBlock up("u", 4, 4);
  EncoderBlock down("e", 4, 4, {});
  const Tensor x = random_tensor({1, 4, 12, 10}, 2);
  EXPECT_EQ(down.forward(up.forward(x, Pass::inference()), Pass::inference()).shape(), x.shape());
}

}  // namespace
