#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "prenet/objectives.hpp"
#include "support.hpp"

using namespace prenet;
using prenet::testing::random_tensor;

TEST_CASE("gaussian taps are normalised and symmetric") {
  const auto taps = gaussian_taps(11, 1.5);
  REQUIRE(taps.size() == 11);
  CHECK(std::abs(std::accumulate(taps.begin(), taps.end(), 0.0) - 1.0) < 1e-12);
  double window = 0.0;
  for (double a : taps)
    for (double b : taps) window += a * b;
  CHECK(std::abs(window - 1.0) < 1e-12);
  for (int i = 0; i < 5; ++i) CHECK(taps[i] == taps[10 - i]);
  CHECK(taps[5] > taps[4]);
  CHECK_THROWS_AS(gaussian_taps(10, 1.5), ConfigError);
  CHECK_THROWS_AS(gaussian_taps(11, 0.0), ConfigError);
}

TEST_CASE("ssim of an image with itself is one") {
  auto x = random_tensor<double>({1, 3, 20, 17}, 1, 0, 1);
  CHECK(std::abs(ssim(x, x).item() - 1.0) < 1e-9);
  auto flat = Tensor<double>::full({1, 3, 12, 12}, 0.3);
  CHECK(std::abs(ssim(flat, flat).item() - 1.0) < 1e-9);
}

TEST_CASE("ssim is symmetric") {
  auto a = random_tensor<double>({2, 3, 16, 16}, 2, 0, 1);
  auto b = random_tensor<double>({2, 3, 16, 16}, 3, 0, 1);
  CHECK(std::abs(ssim(a, b).item() - ssim(b, a).item()) < 1e-12);
}

TEST_CASE("ssim of two constant images has a closed form") {
  auto a = Tensor<double>::full({1, 3, 16, 16}, 0.2);
  auto b = Tensor<double>::full({1, 3, 16, 16}, 0.8);
  const double c1 = 1e-4;
  const double expect = (2 * 0.2 * 0.8 + c1) / (0.2 * 0.2 + 0.8 * 0.8 + c1);
  CHECK(std::abs(expect - 0.47066) < 1e-4);
  CHECK(std::abs(ssim(a, b).item() - expect) < 1e-10);
}

TEST_CASE("ssim stays in [-1, 1] and drops with noise") {
  auto clean = random_tensor<double>({1, 3, 24, 24}, 4, 0.2, 0.8);
  double previous = 1.0;
  for (double amp : {0.02, 0.1, 0.3}) {
    auto noise = random_tensor<double>(clean.shape(), 5, -amp, amp);
    const double s = ssim(clean, add(clean, noise)).item();
    CHECK(s <= 1.0);
    CHECK(s >= -1.0);
    CHECK(s < previous);
    previous = s;
  }
  auto inverted = one_minus(clean);
  const double neg = ssim(clean, inverted).item();
  CHECK(neg >= -1.0);
  CHECK(neg < 0.0);
}

TEST_CASE("ssim rejects mismatched shapes") {
  CHECK_THROWS_AS(ssim(Tensor<double>::zeros({1, 3, 4, 4}), Tensor<double>::zeros({1, 3, 4, 5})), ShapeError);
}

TEST_CASE("negative ssim loss and its float variant") {
  auto a = random_tensor<double>({1, 3, 12, 12}, 6, 0, 1);
  auto b = random_tensor<double>({1, 3, 12, 12}, 7, 0, 1);
  CHECK(neg_ssim_loss(a, b).item() == -ssim(a, b).item());
  const float f = ssim(a.cast<float>(), b.cast<float>()).item();
  CHECK(std::abs(f - ssim(a, b).item()) < 1e-5);
}

TEST_CASE("recursive negative ssim") {
  auto gt = random_tensor<double>({1, 3, 10, 10}, 8, 0, 1);
  StageTrace<double> perfect;
  for (int t = 0; t < 6; ++t) perfect.estimates.push_back(gt);
  CHECK(std::abs(rec_neg_ssim_loss(perfect, gt, LossSpec::default_lambdas(6)).item() + 4.0) < 1e-9);

  // Only the last stage weighted: equals neg_ssim on the final estimate.
  StageTrace<double> trace;
  for (int t = 0; t < 3; ++t) trace.estimates.push_back(random_tensor<double>(gt.shape(), 20 + t, 0, 1));
  CHECK(rec_neg_ssim_loss(trace, gt, {0.0, 0.0, 1.0}).item() ==
        doctest::Approx(neg_ssim_loss(trace.final_estimate(), gt).item()).epsilon(1e-14));
  CHECK_THROWS_AS(rec_neg_ssim_loss(trace, gt, {0.5, 1.5}), ContractError);
}

TEST_CASE("default stage weights") {
  CHECK(LossSpec::default_lambdas(6) == std::vector<double>{0.5, 0.5, 0.5, 0.5, 0.5, 1.5});
  CHECK(LossSpec::default_lambdas(1) == std::vector<double>{1.5});
  LossSpec spec{LossKind::kRecNegSsim, {0.5, 1.5}};
  CHECK_NOTHROW(spec.validate(2));
  CHECK_THROWS_AS(spec.validate(3), ConfigError);
  spec.lambdas = {0.5, -1.0};
  CHECK_THROWS_AS(spec.validate(2), ConfigError);
  CHECK(parse_loss_kind("rec-neg-ssim") == LossKind::kRecNegSsim);
  CHECK(to_string(LossKind::kMse) == "mse");
  CHECK_THROWS_AS(parse_loss_kind("l1"), ConfigError);
}

TEST_CASE("training loss supervises the right stages") {
  auto gt = random_tensor<double>({1, 3, 8, 8}, 9, 0, 1);
  StageTrace<double> trace;
  trace.estimates = {random_tensor<double>(gt.shape(), 10, 0, 1), random_tensor<double>(gt.shape(), 11, 0, 1)};
  CHECK(training_loss(trace, gt, {LossKind::kMse, {}}).item() == mse_loss(trace.final_estimate(), gt).item());
  CHECK(training_loss(trace, gt, {LossKind::kNegSsim, {}}).item() ==
        neg_ssim_loss(trace.final_estimate(), gt).item());
  CHECK(training_loss(trace, gt, {LossKind::kRecNegSsim, {0.5, 1.5}}).item() ==
        rec_neg_ssim_loss(trace, gt, {0.5, 1.5}).item());
}

TEST_CASE("mse against a brute-force sum") {
  auto a = random_tensor<double>({2, 3, 5, 7}, 12);
  auto b = random_tensor<double>({2, 3, 5, 7}, 13);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) acc += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
  CHECK(mse_loss(a, b).item() == doctest::Approx(acc / static_cast<double>(a.numel())).epsilon(1e-14));
}

TEST_CASE("psnr") {
  auto a = random_tensor<double>({1, 3, 9, 9}, 14, 0, 0.8);
  CHECK(std::abs(psnr(a, add_scalar(a, 0.1)) - 20.0) < 1e-9);
  CHECK(std::abs(psnr(a, add_scalar(a, -0.01)) - 40.0) < 1e-6);
  CHECK(psnr(a, a) == std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(psnr(a, Tensor<double>::zeros({1, 3, 9, 8})), ShapeError);
}
