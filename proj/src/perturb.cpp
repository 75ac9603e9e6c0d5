#include "angiogan/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "angiogan/errors.hpp"

namespace angiogan {

std::string_view perturbation_name(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::none:
      return "none";
    case PerturbationKind::blur:
      return "blur";
    case PerturbationKind::sharpen:
      return "sharpen";
    case PerturbationKind::noise:
      return "noise";
    case PerturbationKind::whirl:
      return "whirl";
    case PerturbationKind::pinch:
      return "pinch";
  }
  return "unknown";
}

PerturbationKind parse_perturbation(std::string_view name) {
  for (PerturbationKind k : kAllPerturbations) {
    if (perturbation_name(k) == name) return k;
  }
  if (name == "sharp") return PerturbationKind::sharpen;
  throw ConfigError("unknown perturbation kind '" + std::string(name) + "'");
}

PerturbationSpec PerturbationSpec::defaults(PerturbationKind kind, std::uint64_t seed) {
  PerturbationSpec s;
  s.kind = kind;
  s.seed = seed;
  switch (kind) {
    case PerturbationKind::none:
      s.amount = 0.0;
      break;
    case PerturbationKind::blur:
      s.amount = 2.0;
      break;
    case PerturbationKind::sharpen:
      s.amount = 1.0;
      break;
    case PerturbationKind::noise:
      s.amount = 0.05;
      break;
    case PerturbationKind::whirl:
      s.amount = 1.5;
      break;
    case PerturbationKind::pinch:
      s.amount = 0.5;
      break;
  }
  return s;
}

void PerturbationSpec::validate() const {
  if (!std::isfinite(amount)) throw ConfigError("perturbation amount must be finite");
  if (!(radius_fraction > 0.0 && radius_fraction <= 1.0)) {
    throw ConfigError("radius_fraction must lie in (0, 1]");
  }
  switch (kind) {
    case PerturbationKind::blur:
    case PerturbationKind::noise:
      if (amount < 0.0) throw ConfigError(std::string(perturbation_name(kind)) + " amount must be non-negative");
      break;
    case PerturbationKind::pinch:
      if (!(amount > -0.9 && amount < 0.9)) throw ConfigError("pinch amount must lie in (-0.9, 0.9)");
      break;
    default:
      break;
  }
}

nlohmann::json to_json(const PerturbationSpec& spec) {
  return {{"kind", perturbation_name(spec.kind)},
          {"amount", spec.amount},
          {"radius_fraction", spec.radius_fraction},
          {"seed", spec.seed}};
}

PerturbationSpec perturbation_from_json(const nlohmann::json& j) {
  try {
    PerturbationSpec s = PerturbationSpec::defaults(parse_perturbation(j.at("kind").get<std::string>()));
    s.amount = j.value("amount", s.amount);
    s.radius_fraction = j.value("radius_fraction", s.radius_fraction);
    s.seed = j.value("seed", s.seed);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed perturbation spec: ") + e.what());
  }
}

std::vector<double> gaussian_taps(double sigma) {
  const auto radius = static_cast<std::size_t>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double total = 0.0;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    const double k = static_cast<double>(i) - static_cast<double>(radius);
    taps[i] = std::exp(-k * k / (2.0 * sigma * sigma));
    total += taps[i];
  }
  for (double& t : taps) t /= total;
  return taps;
}

Tensor gaussian_blur(const Tensor& image, double sigma) {
  if (sigma < 0.0) throw ConfigError("blur sigma must be non-negative");
  if (sigma == 0.0) return image;
  const std::vector<double> taps = gaussian_taps(sigma);
  const auto radius = static_cast<long>(taps.size() / 2);
  const Shape s = image.shape();
  const long h = static_cast<long>(s.h);
  const long w = static_cast<long>(s.w);
  Tensor tmp(s);
  Tensor out(s);
#pragma omp parallel for
  for (std::size_t p = 0; p < s.n * s.c; ++p) {
    const double* in = image.data() + p * s.plane();
    double* mid = tmp.data() + p * s.plane();
    double* dst = out.data() + p * s.plane();
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double acc = 0.0;
        for (long k = -radius; k <= radius; ++k) acc += taps[k + radius] * in[y * w + std::clamp(x + k, 0L, w - 1)];
        mid[y * w + x] = acc;
      }
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double acc = 0.0;
        for (long k = -radius; k <= radius; ++k) acc += taps[k + radius] * mid[std::clamp(y + k, 0L, h - 1) * w + x];
        dst[y * w + x] = acc;
      }
  }
  return out;
}

namespace {

double bilinear(const double* plane, std::size_t h, std::size_t w, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const auto y0 = static_cast<std::size_t>(y);
  const auto x0 = static_cast<std::size_t>(x);
  const std::size_t y1 = std::min(y0 + 1, h - 1);
  const std::size_t x1 = std::min(x0 + 1, w - 1);
  const double fy = y - static_cast<double>(y0);
  const double fx = x - static_cast<double>(x0);
  const double top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
  const double bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
  return top * (1.0 - fy) + bottom * fy;
}

/// Inverse mapping inside the disk; `source` maps (dy, dx, d) to the source
/// offset from the centre.
template <typename Source>
Tensor radial_warp(const Tensor& image, double radius_fraction, Source source) {
  const Shape s = image.shape();
  const double cy = (static_cast<double>(s.h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(s.w) - 1.0) / 2.0;
  const double disk = radius_fraction * static_cast<double>(std::min(s.h, s.w)) / 2.0;
  Tensor out = image;
#pragma omp parallel for
  for (std::size_t p = 0; p < s.n * s.c; ++p) {
    const double* in = image.data() + p * s.plane();
    double* dst = out.data() + p * s.plane();
    for (std::size_t y = 0; y < s.h; ++y)
      for (std::size_t x = 0; x < s.w; ++x) {
        const double dy = static_cast<double>(y) - cy;
        const double dx = static_cast<double>(x) - cx;
        const double d = std::hypot(dy, dx) / disk;
        if (d > 1.0) continue;
        const auto [sy, sx] = source(dy, dx, d);
        dst[y * s.w + x] = bilinear(in, s.h, s.w, cy + sy, cx + sx);
      }
  }
  return out;
}

void clamp_unit(Tensor& t) {
  for (double& v : t.values()) v = std::clamp(v, -1.0, 1.0);
}

}  // namespace

Tensor apply_perturbation(const Tensor& image, const PerturbationSpec& spec) {
  spec.validate();
  if (spec.kind == PerturbationKind::none || spec.amount == 0.0) return image;

  Tensor out;
  switch (spec.kind) {
    case PerturbationKind::blur:
      out = gaussian_blur(image, spec.amount);
      break;
    case PerturbationKind::sharpen: {
      const Tensor soft = gaussian_blur(image, 2.0);
      out = image;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += spec.amount * (image[i] - soft[i]);
      break;
    }
    case PerturbationKind::noise: {
      std::mt19937_64 rng(spec.seed);
      std::normal_distribution<double> noise(0.0, spec.amount);
      out = image;
      for (double& v : out.values()) v += noise(rng);
      break;
    }
    case PerturbationKind::whirl:
      out = radial_warp(image, spec.radius_fraction, [&](double dy, double dx, double d) {
        const double r = std::hypot(dy, dx);
        const double theta = std::atan2(dy, dx) - spec.amount * (1.0 - d) * (1.0 - d);
        return std::pair{r * std::sin(theta), r * std::cos(theta)};
      });
      break;
    case PerturbationKind::pinch:
      out = radial_warp(image, spec.radius_fraction, [&](double dy, double dx, double d) {
        if (d == 0.0) return std::pair{0.0, 0.0};
        const double scale = std::pow(d, spec.amount);
        return std::pair{dy * scale, dx * scale};
      });
      break;
    case PerturbationKind::none:
      return image;
  }
  clamp_unit(out);
  return out;
}

}  // namespace angiogan
