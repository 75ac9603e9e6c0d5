#include <gtest/gtest.h>

#include <cmath>

#include "angiogan/errors.hpp"
#include "angiogan/perturb.hpp"
#include "test_util.hpp"

using namespace angiogan;
using angiogan::testing::random_tensor;

namespace {

/// 2-D Gaussian weights over the full (2r+1)^2 square, normalized as a whole,
/// applied directly with edge clamping.
Tensor direct_gaussian(const Tensor& x, double sigma) {
  const long r = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k((2 * r + 1) * (2 * r + 1));
  double total = 0.0;
  for (long i = -r; i <= r; ++i)
    for (long j = -r; j <= r; ++j) {
      const double v = std::exp(-static_cast<double>(i * i + j * j) / (2 * sigma * sigma));
      k[(i + r) * (2 * r + 1) + (j + r)] = v;
      total += v;
    }
  const Shape s = x.shape();
  const long h = static_cast<long>(s.h), w = static_cast<long>(s.w);
  Tensor y(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (long a = 0; a < h; ++a)
        for (long b = 0; b < w; ++b) {
          double acc = 0.0;
          for (long i = -r; i <= r; ++i)
            for (long j = -r; j <= r; ++j) {
              const long yy = std::clamp(a + i, 0L, h - 1), xx = std::clamp(b + j, 0L, w - 1);
              acc += k[(i + r) * (2 * r + 1) + (j + r)] / total * x.at(n, c, yy, xx);
            }
          y.at(n, c, a, b) = acc;
        }
  return y;
}

/// Per-pixel polar inverse mapping with its own bilinear sampler.
Tensor direct_warp(const Tensor& x, PerturbationKind kind, double amount, double fraction) {
  const Shape s = x.shape();
  const double cy = (s.h - 1) / 2.0, cx = (s.w - 1) / 2.0;
  const double radius = fraction * std::min(s.h, s.w) / 2.0;
  Tensor y = x;
  for (std::size_t a = 0; a < s.h; ++a)
    for (std::size_t b = 0; b < s.w; ++b) {
      const double dy = a - cy, dx = b - cx;
      const double r = std::sqrt(dy * dy + dx * dx);
      const double d = r / radius;
      if (d > 1.0) continue;
      double theta = std::atan2(dy, dx);
      double rs = r;
      if (kind == PerturbationKind::whirl) theta -= amount * (1 - d) * (1 - d);
      if (kind == PerturbationKind::pinch) rs = r * std::pow(d, amount);
      double sy = std::clamp(cy + rs * std::sin(theta), 0.0, s.h - 1.0);
      double sx = std::clamp(cx + rs * std::cos(theta), 0.0, s.w - 1.0);
      const std::size_t y0 = static_cast<std::size_t>(std::floor(sy)), x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t y1 = std::min(y0 + 1, s.h - 1), x1 = std::min(x0 + 1, s.w - 1);
      const double fy = sy - y0, fx = sx - x0;
      for (std::size_t c = 0; c < s.c; ++c) {
        const double v = (1 - fy) * ((1 - fx) * x.at(0, c, y0, x0) + fx * x.at(0, c, y0, x1)) +
                         fy * ((1 - fx) * x.at(0, c, y1, x0) + fx * x.at(0, c, y1, x1));
        y.at(0, c, a, b) = std::clamp(v, -1.0, 1.0);
      }
    }
  return y;
}

Tensor radial_pattern(std::size_t h, std::size_t w) {
  Tensor t({1, 1, h, w});
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double r = std::hypot(y - cy, x - cx);
      t.at(0, 0, y, x) = std::cos(r / 2.5) * 0.8 + 0.1 * std::sin(std::atan2(y - cy, x - cx) * 3);
    }
  return t;
}

TEST(Perturb, ZeroAmountIsExactIdentity) {
  const Tensor x = random_tensor({1, 3, 33, 40}, 1);
  for (PerturbationKind k : kAllPerturbations) {
    PerturbationSpec spec = PerturbationSpec::defaults(k, 5);
    spec.amount = 0.0;
    EXPECT_EQ(apply_perturbation(x, spec), x) << perturbation_name(k);
  }
  EXPECT_EQ(apply_perturbation(x, PerturbationSpec::defaults(PerturbationKind::none)), x);
}

TEST(Perturb, OutputsStayInUnitRange) {
  const Tensor x = random_tensor({1, 3, 32, 32}, 2);
  for (PerturbationKind k : kAllPerturbations) {
    PerturbationSpec spec = PerturbationSpec::defaults(k, 3);
    spec.amount *= 4.0;
    if (k == PerturbationKind::pinch) spec.amount = 0.85;
    const Tensor y = apply_perturbation(x, spec);
    EXPECT_EQ(y.shape(), x.shape());
    EXPECT_GE(min_value(y), -1.0) << perturbation_name(k);
    EXPECT_LE(max_value(y), 1.0) << perturbation_name(k);
  }
}

TEST(Blur, ImpulseMatchesDirectConvolution) {
  for (double sigma : {0.5, 1.0, 2.0, 3.3}) {
    Tensor x({1, 1, 31, 31});
    x.at(0, 0, 15, 15) = 1.0;
    const Tensor y = gaussian_blur(x, sigma);
    EXPECT_LE(max_abs_diff(y, direct_gaussian(x, sigma)), 1e-6) << sigma;
    EXPECT_NEAR(sum(y), 1.0, 1e-12);
  }
}

TEST(Blur, RandomImageWithEdgesMatchesDirectConvolution) {
  const Tensor x = random_tensor({2, 2, 12, 14}, 4);
  EXPECT_LE(max_abs_diff(gaussian_blur(x, 1.7), direct_gaussian(x, 1.7)), 1e-12);
}

TEST(Blur, ConstantImageIsPreserved) {
  const Tensor x({1, 3, 20, 20}, 0.37);
  const Tensor y = apply_perturbation(x, PerturbationSpec::defaults(PerturbationKind::blur));
  for (double v : y.values()) EXPECT_NEAR(v, 0.37, 1e-6);
}

TEST(Sharpen, UnsharpMaskFormula) {
  const Tensor x = random_tensor({1, 1, 24, 24}, 5, -0.3, 0.3);
  PerturbationSpec spec = PerturbationSpec::defaults(PerturbationKind::sharpen);
  spec.amount = 0.7;
  const Tensor soft = direct_gaussian(x, 2.0);
  const Tensor y = apply_perturbation(x, spec);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(y[i], std::clamp(x[i] + 0.7 * (x[i] - soft[i]), -1.0, 1.0), 1e-12);
  }
}

TEST(Noise, SeededAndZeroMean) {
  const Tensor x({1, 1, 128, 128}, 0.0);
  const PerturbationSpec spec = PerturbationSpec::defaults(PerturbationKind::noise, 99);
  const Tensor a = apply_perturbation(x, spec);
  EXPECT_EQ(apply_perturbation(x, spec), a);
  EXPECT_NE(apply_perturbation(x, PerturbationSpec::defaults(PerturbationKind::noise, 100)), a);
  const double n = static_cast<double>(x.size());
  EXPECT_LE(std::abs(sum(a) / n), 3 * spec.amount / std::sqrt(n));
}

TEST(Whirl, LocalityAndFixedCentre) {
  const Tensor x = random_tensor({1, 3, 41, 51}, 6);
  PerturbationSpec spec = PerturbationSpec::defaults(PerturbationKind::whirl);
  spec.radius_fraction = 0.5;
  const Tensor y = apply_perturbation(x, spec);
  const double radius = 0.5 * 41 / 2.0;
  std::size_t changed = 0;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t a = 0; a < 41; ++a)
      for (std::size_t b = 0; b < 51; ++b) {
        const double r = std::hypot(a - 20.0, b - 25.0);
        if (r > radius) {
          ASSERT_EQ(y.at(0, c, a, b), x.at(0, c, a, b)) << a << "," << b;
        } else if (y.at(0, c, a, b) != x.at(0, c, a, b)) {
          ++changed;
        }
      }
  EXPECT_EQ(y.at(0, 0, 20, 25), x.at(0, 0, 20, 25));
  EXPECT_GT(changed, 100u);
}

TEST(Whirl, MatchesDirectInverseMapping) {
  const Tensor x = radial_pattern(40, 48);
  PerturbationSpec spec = PerturbationSpec::defaults(PerturbationKind::whirl);
  spec.radius_fraction = 0.8;
  EXPECT_LE(max_abs_diff(apply_perturbation(x, spec), direct_warp(x, PerturbationKind::whirl, 1.5, 0.8)), 1e-12);
}

TEST(Pinch, MatchesDirectInverseMapping) {
  const Tensor x = radial_pattern(40, 48);
  for (double p : {0.5, -0.5, 0.8}) {
    PerturbationSpec spec = PerturbationSpec::defaults(PerturbationKind::pinch);
    spec.amount = p;
    EXPECT_LE(max_abs_diff(apply_perturbation(x, spec), direct_warp(x, PerturbationKind::pinch, p, 1.0)), 1e-12) << p;
  }
}

TEST(Pinch, RadiiFollowThePowerLaw) {
  // On a cone v = r / R the warped value at radius r is approximately
  // r_src / R = d^(1 + p), up to bilinear error.
  const std::size_t n = 101;
  Tensor cone({1, 1, n, n});
  const double c = 50.0, radius = 50.0;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) cone.at(0, 0, y, x) = std::min(1.0, std::hypot(y - c, x - c) / radius);
  PerturbationSpec spec = PerturbationSpec::defaults(PerturbationKind::pinch);
  const Tensor y = apply_perturbation(cone, spec);
  for (std::size_t x = 55; x < 100; x += 5) {
    const double d = (x - c) / radius;
    EXPECT_NEAR(y.at(0, 0, 50, x), std::pow(d, 1.5), 0.02) << x;
  }
}

TEST(PerturbationSpec, Validation) {
  EXPECT_THROW(parse_perturbation("swirl"), ConfigError);
  EXPECT_EQ(parse_perturbation("sharp"), PerturbationKind::sharpen);
  PerturbationSpec s = PerturbationSpec::defaults(PerturbationKind::whirl);
  s.radius_fraction = 0.0;
  EXPECT_THROW(apply_perturbation(Tensor({1, 1, 4, 4}), s), ConfigError);
  s = PerturbationSpec::defaults(PerturbationKind::pinch);
  s.amount = 0.95;
  EXPECT_THROW(s.validate(), ConfigError);
  s = PerturbationSpec::defaults(PerturbationKind::blur);
  s.amount = -1.0;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(PerturbationSpec, JsonRoundTrip) {
  PerturbationSpec s = PerturbationSpec::defaults(PerturbationKind::whirl, 12);
  s.radius_fraction = 0.6;
  const PerturbationSpec r = perturbation_from_json(to_json(s));
  EXPECT_EQ(r.kind, s.kind);
  EXPECT_EQ(r.amount, s.amount);
  EXPECT_EQ(r.radius_fraction, s.radius_fraction);
  EXPECT_EQ(r.seed, s.seed);
}

}  // namespace
