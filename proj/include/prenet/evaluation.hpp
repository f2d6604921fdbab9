#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prenet/dataset.hpp"
#include "prenet/network.hpp"

namespace prenet {

// Inference on a (1,3,h,w) image without building a gradient graph.
StageTrace<float> derain(const ParameterSet<float>& params, const NetworkConfig& config,
                         const Tensor<float>& image, std::optional<int> stop_at_stage = std::nullopt);

struct ImageMetrics {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
};

// Metrics are taken on the clamped output in [0, 1], in double precision.
ImageMetrics score(const std::string& name, const Tensor<float>& output, const Tensor<float>& clean);

std::vector<ImageMetrics> evaluate(const ParameterSet<float>& params, const NetworkConfig& config,
                                   std::span<const ImagePair> pairs,
                                   std::optional<int> stop_at_stage = std::nullopt);

// The rainy inputs scored against their clean targets.
std::vector<ImageMetrics> evaluate_inputs(std::span<const ImagePair> pairs);

// Arithmetic means; an infinite PSNR anywhere makes the PSNR mean infinite.
ImageMetrics mean_metrics(std::span<const ImageMetrics> rows);

Tensor<float> clamp01(const Tensor<float>& x);

}  // namespace prenet
