#include "prenet/rain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "prenet/objectives.hpp"
#include "prenet/ops.hpp"
#include "prenet/random.hpp"

namespace prenet {

namespace {

double deg_to_rad(double d) { return d * std::numbers::pi / 180.0; }

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax;
  const double vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (ax + t * vx);
  const double dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

// Zero-filled Gaussian blur divided by in-image window mass.
std::vector<float> blur_plane(const std::vector<float>& plane, std::int64_t h, std::int64_t w, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  const auto taps = gaussian_taps(2 * radius + 1, sigma);
  const Shape s{1, 1, h, w};
  const auto blurred = separable_filter(Tensor<float>::from_vector(s, plane), taps);
  const auto mass = separable_filter(Tensor<float>::full(s, 1.0f), taps);
  std::vector<float> out(plane.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = blurred.data()[i] / mass.data()[i];
  return out;
}

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(std::string("rain parameters: ") + what);
}

}  // namespace

void RainParams::validate() const {
  require(streak_count >= 0, "streak_count must be >= 0");
  require(angle_min <= angle_max, "angle_min > angle_max");
  require(angle_jitter >= 0.0, "angle_jitter must be >= 0");
  require(length_min > 0.0 && length_min <= length_max, "length range must be positive and ordered");
  require(width_min > 0.0 && width_min <= width_max, "width range must be positive and ordered");
  require(intensity_min > 0.0 && intensity_min <= intensity_max && intensity_max <= 0.8,
          "intensity range must lie in (0, 0.8]");
  require(blur_sigma >= 0.0, "blur_sigma must be >= 0");
}

Tensor<float> render_rain_layer(std::int64_t height, std::int64_t width, const RainParams& params) {
  params.validate();
  if (height <= 0 || width <= 0) throw ShapeError("render_rain_layer: empty extent");
  std::vector<float> layer(static_cast<std::size_t>(height * width), 0.0f);
  Rng rng({params.seed, 0x7261696eULL});
  const double base_angle = rng.uniform(params.angle_min, params.angle_max);

  for (int s = 0; s < params.streak_count; ++s) {
    const double angle = deg_to_rad(base_angle + rng.uniform(-params.angle_jitter, params.angle_jitter));
    const double length = rng.uniform(params.length_min, params.length_max);
    const double thickness = rng.uniform(params.width_min, params.width_max);
    const double intensity = rng.uniform(params.intensity_min, params.intensity_max);
    const double cx = rng.uniform(-0.1, 1.1) * static_cast<double>(width);
    const double cy = rng.uniform(-0.1, 1.1) * static_cast<double>(height);
    const double dx = std::sin(angle) * length * 0.5;
    const double dy = std::cos(angle) * length * 0.5;
    const double ax = cx - dx, ay = cy - dy, bx = cx + dx, by = cy + dy;

    const double reach = thickness * 0.5 + 1.0;
    const auto x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(std::min(ax, bx) - reach)));
    const auto x1 = std::min<std::int64_t>(width - 1, static_cast<std::int64_t>(std::ceil(std::max(ax, bx) + reach)));
    const auto y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(std::min(ay, by) - reach)));
    const auto y1 = std::min<std::int64_t>(height - 1, static_cast<std::int64_t>(std::ceil(std::max(ay, by) + reach)));
    for (std::int64_t y = y0; y <= y1; ++y) {
      for (std::int64_t x = x0; x <= x1; ++x) {
        const double d = segment_distance(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5, ax, ay, bx, by);
        const double coverage = std::clamp(thickness * 0.5 + 0.5 - d, 0.0, 1.0);
        if (coverage <= 0.0) continue;
        float& px = layer[static_cast<std::size_t>(y * width + x)];
        px = std::max(px, static_cast<float>(intensity * coverage));
      }
    }
  }
  if (params.blur_sigma > 0.0 && params.streak_count > 0) {
    layer = blur_plane(layer, height, width, params.blur_sigma);
    for (auto& v : layer) v = std::max(v, 0.0f);
  }
  return Tensor<float>::from_vector({1, 1, height, width}, std::move(layer));
}

RainyPair synthesize_pair(const Tensor<float>& clean, const RainParams& params) {
  const Shape s = clean.shape();
  if (s.n != 1 || s.c != 3) throw ShapeError("synthesize_pair expects (1,3,h,w), got " + s.str());
  const Tensor<float> rain = render_rain_layer(s.h, s.w, params);
  std::vector<float> rainy(clean.data().begin(), clean.data().end());
  const auto r = rain.data();
  const std::size_t hw = r.size();
  for (std::size_t i = 0; i < rainy.size(); ++i) rainy[i] = std::clamp(rainy[i] + r[i % hw], 0.0f, 1.0f);
  return {Tensor<float>::from_vector(s, std::move(rainy)), clean};
}

Tensor<float> synthesize_background(std::int64_t height, std::int64_t width, std::uint64_t seed) {
  if (height <= 0 || width <= 0) throw ShapeError("synthesize_background: empty extent");
  Rng rng({seed, 0x626b6764ULL});
  const std::int64_t hw = height * width;
  std::vector<double> img(static_cast<std::size_t>(3 * hw));

  double base[3];
  for (double& b : base) b = rng.uniform(0.2, 0.55);
  struct Wave {
    double fx, fy, phase, amp[3];
  };
  std::vector<Wave> waves(3);
  for (auto& wv : waves) {
    wv.fx = rng.uniform(-3.0, 3.0) / static_cast<double>(width);
    wv.fy = rng.uniform(-3.0, 3.0) / static_cast<double>(height);
    wv.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (double& a : wv.amp) a = rng.uniform(-0.08, 0.08);
  }
  for (std::int64_t y = 0; y < height; ++y) {
    for (std::int64_t x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = base[c];
        for (const auto& wv : waves) {
          v += wv.amp[c] * std::sin(2.0 * std::numbers::pi * (wv.fx * x + wv.fy * y) + wv.phase);
        }
        img[static_cast<std::size_t>(c * hw + y * width + x)] = v;
      }
    }
  }

  // Soft-edged discs give the background some structure to preserve.
  const int discs = static_cast<int>(rng.range(2, 5));
  for (int d = 0; d < discs; ++d) {
    const double cx = rng.uniform(0.0, static_cast<double>(width));
    const double cy = rng.uniform(0.0, static_cast<double>(height));
    const double radius = rng.uniform(0.1, 0.3) * static_cast<double>(std::min(height, width));
    double color[3];
    for (double& c : color) c = rng.uniform(0.05, 0.75);
    for (std::int64_t y = 0; y < height; ++y) {
      for (std::int64_t x = 0; x < width; ++x) {
        const double dist = std::hypot(static_cast<double>(x) + 0.5 - cx, static_cast<double>(y) + 0.5 - cy);
        const double alpha = std::clamp(radius - dist + 0.5, 0.0, 1.0);
        if (alpha <= 0.0) continue;
        for (int c = 0; c < 3; ++c) {
          double& v = img[static_cast<std::size_t>(c * hw + y * width + x)];
          v = (1.0 - alpha) * v + alpha * color[c];
        }
      }
    }
  }

  std::vector<float> out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = static_cast<float>(std::clamp(img[i], 0.05, 0.8));
  return Tensor<float>::from_vector({1, 3, height, width}, std::move(out));
}

}  // namespace prenet
