#pragma once

#include <cstdint>

#include "prenet/tensor.hpp"

namespace prenet {

// Streak field for additive composition. Angles are degrees from vertical;
// one dominant direction is drawn per image from [angle_min, angle_max] and
// each streak deviates from it by at most angle_jitter.
struct RainParams {
  int streak_count = 120;
  double angle_min = -20.0;
  double angle_max = 20.0;
  double angle_jitter = 4.0;
  double length_min = 8.0;
  double length_max = 24.0;
  double width_min = 1.0;
  double width_max = 2.0;
  double intensity_min = 0.3;
  double intensity_max = 0.8;
  double blur_sigma = 0.6;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RainyPair {
  Tensor<float> rainy;
  Tensor<float> clean;
};

// (1, 1, h, w) rain layer, values >= 0. Anti-aliased segments, max-combined,
// then Gaussian blurred.
Tensor<float> render_rain_layer(std::int64_t height, std::int64_t width, const RainParams& params);

// rainy = clamp(clean + rain, 0, 1) with the same rain in all three channels.
RainyPair synthesize_pair(const Tensor<float>& clean, const RainParams& params);

// Smooth procedural (1, 3, h, w) background in roughly [0.05, 0.8] so that
// added rain stays visible.
Tensor<float> synthesize_background(std::int64_t height, std::int64_t width, std::uint64_t seed);

}  // namespace prenet
