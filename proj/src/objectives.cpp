#include "prenet/objectives.hpp"

#include <cmath>
#include <limits>

#include "prenet/ops.hpp"

namespace prenet {

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kMse:
      return "mse";
    case LossKind::kNegSsim:
      return "neg_ssim";
    case LossKind::kRecNegSsim:
      return "rec_neg_ssim";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view s) {
  if (s == "mse") return LossKind::kMse;
  if (s == "neg_ssim" || s == "neg-ssim" || s == "ssim") return LossKind::kNegSsim;
  if (s == "rec_neg_ssim" || s == "rec-neg-ssim" || s == "recssim") return LossKind::kRecNegSsim;
  throw ConfigError("unknown loss '" + std::string(s) + "' (expected mse, neg_ssim, rec_neg_ssim)");
}

void LossSpec::validate(int stages) const {
  if (kind != LossKind::kRecNegSsim) return;
  if (static_cast<int>(lambdas.size()) != stages) {
    throw ConfigError("rec_neg_ssim needs " + std::to_string(stages) + " stage weights, got " +
                      std::to_string(lambdas.size()));
  }
  for (double l : lambdas) {
    if (!(l > 0.0)) throw ConfigError("stage weights must be positive");
  }
}

std::vector<double> LossSpec::default_lambdas(int stages) {
  std::vector<double> out(static_cast<std::size_t>(std::max(stages, 0)), 0.5);
  if (!out.empty()) out.back() = 1.5;
  return out;
}

std::vector<double> gaussian_taps(int size, double sigma) {
  if (size <= 0 || size % 2 == 0 || !(sigma > 0.0)) {
    throw ConfigError("Gaussian window needs an odd positive size and positive sigma");
  }
  const int r = size / 2;
  std::vector<double> taps(static_cast<std::size_t>(size));
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = static_cast<double>(i - r);
    taps[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    total += taps[static_cast<std::size_t>(i)];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& estimate, const Tensor<T>& target) {
  const Tensor<T> diff = sub(estimate, target);
  return mean(mul(diff, diff));
}

namespace {

// 1 / (in-image window mass) for every pixel, broadcast to `shape`.
template <typename T>
Tensor<T> inverse_window_mass(const Shape& shape, std::span<const double> taps) {
  const Shape plane{1, 1, shape.h, shape.w};
  const Tensor<T> mass = separable_filter(Tensor<T>::full(plane, T(1)), taps);
  std::vector<T> out(static_cast<std::size_t>(shape.numel()));
  const auto m = mass.data();
  const std::size_t hw = m.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) / m[i % hw];
  return Tensor<T>::from_vector(shape, std::move(out));
}

}  // namespace

template <typename T>
Tensor<T> ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimSettings& settings) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError("ssim: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  const std::vector<double> taps = gaussian_taps(settings.window, settings.sigma);
  const Tensor<T> inv_mass = inverse_window_mass<T>(a.shape(), taps);
  auto local = [&](const Tensor<T>& x) { return mul(separable_filter(x, taps), inv_mass); };

  const T c1 = static_cast<T>(settings.c1());
  const T c2 = static_cast<T>(settings.c2());

  const Tensor<T> mu_a = local(a);
  const Tensor<T> mu_b = local(b);
  const Tensor<T> mu_aa = mul(mu_a, mu_a);
  const Tensor<T> mu_bb = mul(mu_b, mu_b);
  const Tensor<T> mu_ab = mul(mu_a, mu_b);
  const Tensor<T> var_a = sub(local(mul(a, a)), mu_aa);
  const Tensor<T> var_b = sub(local(mul(b, b)), mu_bb);
  const Tensor<T> cov = sub(local(mul(a, b)), mu_ab);

  const Tensor<T> numerator =
      mul(add_scalar(scale(mu_ab, T(2)), c1), add_scalar(scale(cov, T(2)), c2));
  const Tensor<T> denominator =
      mul(add_scalar(add(mu_aa, mu_bb), c1), add_scalar(add(var_a, var_b), c2));
  return mean(div(numerator, denominator));
}

template <typename T>
Tensor<T> neg_ssim_loss(const Tensor<T>& estimate, const Tensor<T>& target, const SsimSettings& settings) {
  return scale(ssim(estimate, target, settings), T(-1));
}

template <typename T>
Tensor<T> rec_neg_ssim_loss(const StageTrace<T>& trace, const Tensor<T>& target,
                            const std::vector<double>& lambdas, const SsimSettings& settings) {
  if (lambdas.size() != trace.estimates.size()) {
    throw ContractError("rec_neg_ssim_loss: " + std::to_string(lambdas.size()) + " weights for " +
                        std::to_string(trace.estimates.size()) + " stages");
  }
  if (trace.estimates.empty()) throw ContractError("rec_neg_ssim_loss: empty trace");
  Tensor<T> total;
  for (std::size_t t = 0; t < lambdas.size(); ++t) {
    Tensor<T> term = scale(ssim(trace.estimates[t], target, settings), static_cast<T>(-lambdas[t]));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

template <typename T>
Tensor<T> training_loss(const StageTrace<T>& trace, const Tensor<T>& target, const LossSpec& spec) {
  if (trace.estimates.empty()) throw ContractError("training_loss: empty trace");
  switch (spec.kind) {
    case LossKind::kMse:
      return mse_loss(trace.final_estimate(), target);
    case LossKind::kNegSsim:
      return neg_ssim_loss(trace.final_estimate(), target);
    case LossKind::kRecNegSsim:
      return rec_neg_ssim_loss(trace, target, spec.lambdas);
  }
  throw ContractError("unknown loss kind");
}

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError("psnr: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  const auto ad = a.data();
  const auto bd = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < ad.size(); ++i) {
    const double d = static_cast<double>(ad[i]) - static_cast<double>(bd[i]);
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(ad.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

#define PRENET_INSTANTIATE_OBJECTIVES(T)                                                          \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> ssim(const Tensor<T>&, const Tensor<T>&, const SsimSettings&);               \
  template Tensor<T> neg_ssim_loss(const Tensor<T>&, const Tensor<T>&, const SsimSettings&);      \
  template Tensor<T> rec_neg_ssim_loss(const StageTrace<T>&, const Tensor<T>&,                    \
                                       const std::vector<double>&, const SsimSettings&);          \
  template Tensor<T> training_loss(const StageTrace<T>&, const Tensor<T>&, const LossSpec&);      \
  template double psnr(const Tensor<T>&, const Tensor<T>&);

PRENET_INSTANTIATE_OBJECTIVES(float)
PRENET_INSTANTIATE_OBJECTIVES(double)

#undef PRENET_INSTANTIATE_OBJECTIVES

}  // namespace prenet
