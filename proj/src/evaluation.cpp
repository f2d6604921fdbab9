#include "prenet/evaluation.hpp"

#include <algorithm>

#include "prenet/objectives.hpp"

namespace prenet {

StageTrace<float> derain(const ParameterSet<float>& params, const NetworkConfig& config,
                         const Tensor<float>& image, std::optional<int> stop_at_stage) {
  // Frozen copies keep every op output a plain leaf.
  const ParameterSet<float> frozen = params.clone(false);
  return forward(frozen, config, image.detach(), stop_at_stage);
}

Tensor<float> clamp01(const Tensor<float>& x) {
  std::vector<float> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = std::clamp(v, 0.0f, 1.0f);
  return Tensor<float>::from_vector(x.shape(), std::move(out));
}

ImageMetrics score(const std::string& name, const Tensor<float>& output, const Tensor<float>& clean) {
  const Tensor<double> a = clamp01(output).cast<double>();
  const Tensor<double> b = clean.cast<double>();
  return {name, psnr(a, b), ssim(a, b).item()};
}

std::vector<ImageMetrics> evaluate(const ParameterSet<float>& params, const NetworkConfig& config,
                                   std::span<const ImagePair> pairs, std::optional<int> stop_at_stage) {
  const ParameterSet<float> frozen = params.clone(false);
  std::vector<ImageMetrics> rows;
  rows.reserve(pairs.size());
  for (const auto& p : pairs) {
    const auto trace = forward(frozen, config, p.rainy, stop_at_stage);
    rows.push_back(score(p.name, trace.final_estimate(), p.clean));
  }
  return rows;
}

std::vector<ImageMetrics> evaluate_inputs(std::span<const ImagePair> pairs) {
  std::vector<ImageMetrics> rows;
  rows.reserve(pairs.size());
  for (const auto& p : pairs) rows.push_back(score(p.name, p.rainy, p.clean));
  return rows;
}

ImageMetrics mean_metrics(std::span<const ImageMetrics> rows) {
  ImageMetrics m{"mean", 0.0, 0.0};
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.psnr += r.psnr;
    m.ssim += r.ssim;
  }
  m.psnr /= static_cast<double>(rows.size());
  m.ssim /= static_cast<double>(rows.size());
  return m;
}

}  // namespace prenet
