#pragma once

#include <string_view>
#include <vector>

#include "prenet/network.hpp"
#include "prenet/tensor.hpp"

namespace prenet {

enum class LossKind { kMse, kNegSsim, kRecNegSsim };

std::string_view to_string(LossKind kind);
// "mse", "neg_ssim", "rec_neg_ssim" (dashes accepted as well).
LossKind parse_loss_kind(std::string_view s);

struct LossSpec {
  LossKind kind = LossKind::kNegSsim;
  // One weight per stage, rec_neg_ssim only.
  std::vector<double> lambdas;

  void validate(int stages) const;

  // 0.5 for every stage but the last, 1.5 for the last.
  static std::vector<double> default_lambdas(int stages);
};

struct SsimSettings {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

// Normalised 1-D Gaussian; the 2-D window is its outer product.
std::vector<double> gaussian_taps(int size, double sigma);

// Mean of squared differences over every element.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& estimate, const Tensor<T>& target);

/// Mean local SSIM over all pixels and channels.
///
/// Local statistics use the Gaussian window over the zero-filled image,
/// divided by the window mass that falls inside the image. Away from the
/// border this is the plain Gaussian-weighted SSIM; at the border it keeps
/// constant regions at zero variance.
template <typename T>
Tensor<T> ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimSettings& settings = {});

template <typename T>
Tensor<T> neg_ssim_loss(const Tensor<T>& estimate, const Tensor<T>& target,
                        const SsimSettings& settings = {});

// -sum_t lambda_t * ssim(x^t, target).
template <typename T>
Tensor<T> rec_neg_ssim_loss(const StageTrace<T>& trace, const Tensor<T>& target,
                            const std::vector<double>& lambdas, const SsimSettings& settings = {});

// Dispatches on spec.kind. mse and neg_ssim supervise the last stage only.
template <typename T>
Tensor<T> training_loss(const StageTrace<T>& trace, const Tensor<T>& target, const LossSpec& spec);

/// 10 log10(1 / mse) over every element, peak 1.0. Identical inputs give
/// +infinity.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace prenet
