// Acceptance gate. One PASS/FAIL line per criterion; exits non-zero when
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>

#include "../support.hpp"
#include "prenet/checkpoint.hpp"
#include "prenet/cli.hpp"
#include "prenet/dataset.hpp"
#include "prenet/evaluation.hpp"
#include "prenet/image_io.hpp"
#include "prenet/objectives.hpp"
#include "prenet/ops.hpp"
#include "prenet/rain.hpp"
#include "prenet/trainer.hpp"

using namespace prenet;
namespace pt = prenet::testing;

namespace {

struct Verdict {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void criterion(const std::string& name, const std::function<void(Verdict&)>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    body(v);
  } catch (const std::exception& e) {
    v.ok = false;
    v.detail << " [exception: " << e.what() << "]";
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!v.ok) ++failures;
  std::printf("%s %s:%s (%.1f s)\n", v.ok ? "PASS" : "FAIL", name.c_str(), v.detail.str().c_str(), s);
  std::fflush(stdout);
}

// --- parameter counts -------------------------------------------------------

void parameter_counts(Verdict& v) {
  const std::pair<const char*, NetworkConfig> cases[] = {{"PRN", NetworkConfig::prn()},
                                                         {"PReNet", NetworkConfig::prenet()},
                                                         {"PRN_r", NetworkConfig::prn_r()},
                                                         {"PReNet_r", NetworkConfig::prenet_r()}};
  const std::int64_t expect[] = {95107, 168963, 21123, 94979};
  for (int i = 0; i < 4; ++i) {
    const std::int64_t built = build<float>(cases[i].second, 0).total_count();
    const std::int64_t closed = count_parameters(cases[i].second);
    v.detail << ' ' << cases[i].first << '=' << built;
    v.require(built == expect[i] && closed == expect[i], cases[i].first);
  }
}

// --- gradient suite ---------------------------------------------------------

void gradient_suite(Verdict& v) {
  using Inputs = std::vector<Tensor<double>>;
  auto project = [](const Tensor<double>& y) { return sum(mul(y, pt::random_tensor<double>(y.shape(), 99))); };
  auto r = [](Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    return pt::random_tensor<double>(s, seed, lo, hi);
  };
  const Shape s{1, 4, 6, 6};
  const auto taps = gaussian_taps(5, 1.0);

  // relu inputs kept away from the kink.
  std::vector<double> off_kink(static_cast<std::size_t>(s.numel()));
  {
    Rng rng(5);
    for (auto& x : off_kink) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.05, 1.0);
  }

  struct Case {
    const char* name;
    Inputs inputs;
    std::function<Tensor<double>(const Inputs&)> f;
  };
  std::vector<Case> cases = {
      {"conv2d", {r(s, 1), r({3, 4, 3, 3}, 2), r({1, 3, 1, 1}, 3)},
       [&](const Inputs& a) { return project(conv2d(a[0], a[1], a[2])); }},
      {"conv2d_nobias", {r(s, 4), r({2, 4, 3, 3}, 5)},
       [&](const Inputs& a) { return project(conv2d(a[0], a[1], Tensor<double>{})); }},
      {"relu", {Tensor<double>::from_vector(s, off_kink)}, [&](const Inputs& a) { return project(relu(a[0])); }},
      {"sigmoid", {r(s, 6)}, [&](const Inputs& a) { return project(sigmoid(a[0])); }},
      {"tanh", {r(s, 7)}, [&](const Inputs& a) { return project(tanh(a[0])); }},
      {"concat_channels", {r({1, 3, 6, 6}, 8), r({1, 1, 6, 6}, 9)},
       [&](const Inputs& a) { return project(concat_channels(a[0], a[1])); }},
      {"slice_channels", {r(s, 10)}, [&](const Inputs& a) { return project(slice_channels(a[0], 1, 3)); }},
      {"add", {r(s, 11), r(s, 12)}, [&](const Inputs& a) { return project(add(a[0], a[1])); }},
      {"sub", {r(s, 13), r(s, 14)}, [&](const Inputs& a) { return project(sub(a[0], a[1])); }},
      {"mul", {r(s, 15), r(s, 16)}, [&](const Inputs& a) { return project(mul(a[0], a[1])); }},
      {"div", {r(s, 17), r(s, 18, 0.5, 2.0)}, [&](const Inputs& a) { return project(div(a[0], a[1])); }},
      {"scale", {r(s, 19)}, [&](const Inputs& a) { return project(scale(a[0], 1.7)); }},
      {"add_scalar", {r(s, 20)}, [&](const Inputs& a) { return project(add_scalar(a[0], -0.4)); }},
      {"one_minus", {r(s, 21)}, [&](const Inputs& a) { return project(one_minus(a[0])); }},
      {"sum", {r(s, 22)}, [&](const Inputs& a) { return sum(mul(a[0], a[0])); }},
      {"mean", {r(s, 23)}, [&](const Inputs& a) { return mean(mul(a[0], a[0])); }},
      {"separable_filter", {r(s, 24)},
       [&](const Inputs& a) { return project(separable_filter(a[0], std::span<const double>(taps))); }},
      {"mse_loss", {r(s, 25, 0, 1), r(s, 26, 0, 1)}, [](const Inputs& a) { return mse_loss(a[0], a[1]); }},
      {"ssim", {r(s, 27, 0, 1), r(s, 28, 0, 1)}, [](const Inputs& a) { return ssim(a[0], a[1]); }},
      {"neg_ssim_loss", {r(s, 29, 0, 1), r(s, 30, 0, 1)}, [](const Inputs& a) { return neg_ssim_loss(a[0], a[1]); }},
      {"rec_neg_ssim_loss", {r(s, 31, 0, 1), r(s, 32, 0, 1), r(s, 33, 0, 1)},
       [](const Inputs& a) {
         StageTrace<double> t;
         t.estimates = {a[0], a[1]};
         return rec_neg_ssim_loss(t, a[2], {0.5, 1.5});
       }},
  };
  double worst = 0.0;
  std::size_t checked = 0;
  for (auto& c : cases) {
    const auto res = pt::check_gradients(c.inputs, c.f);
    worst = std::max(worst, res.max_error);
    checked += res.checked;
    v.require(res.checked > 0 && res.max_error < 1e-4, c.name);
  }
  v.detail << ' ' << cases.size() << " functions, " << checked << " partials, max rel err " << worst;
}

// --- weight sharing ---------------------------------------------------------

void weight_sharing(Verdict& v) {
  auto cfg = NetworkConfig::prn();
  cfg.stages = 2;
  auto shared = build<double>(cfg, 21);
  auto copy1 = shared.clone(true);
  auto copy2 = shared.clone(true);
  const auto y = pt::random_tensor<double>({1, 3, 12, 12}, 4, 0, 1);
  const auto gt = pt::random_tensor<double>({1, 3, 12, 12}, 5, 0, 1);

  backward(mse_loss(forward(shared, cfg, y).final_estimate(), gt));
  const auto x1 = pt::prn_stage_oracle(copy1, cfg, y, y);
  backward(mse_loss(pt::prn_stage_oracle(copy2, cfg, x1, y), gt));

  double worst = 0.0;
  for (std::size_t k = 0; k < shared.size(); ++k) {
    const auto g = shared.entries()[k].value.grad();
    const auto g1 = copy1.entries()[k].value.grad();
    const auto g2 = copy2.entries()[k].value.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double ref = g1[i] + g2[i];
      const double denom = std::max(std::abs(ref), 1e-12);
      worst = std::max(worst, std::abs(g[i] - ref) / denom);
    }
  }
  v.detail << " PRN T=2, " << shared.total_count() << " parameters, max rel diff " << worst;
  v.require(worst < 1e-6, "relative difference");
}

// --- stage prefix -----------------------------------------------------------

void stage_prefix(Verdict& v) {
  pt::TempDir dir("accept_prefix");
  const auto cfg = NetworkConfig::prenet();
  const auto params = build<float>(cfg, 7);
  save_checkpoint(dir / "m.prnc", params, cfg);
  Tensor<float> image = synthesize_pair(synthesize_background(64, 64, 1), RainParams{}).rainy;
  save_image(image, dir / "in.png");
  image = load_image(dir / "in.png");

  const auto full = derain(params, cfg, image);
  for (int t = 1; t <= 6; ++t) {
    const auto part = derain(params, cfg, image, t);
    v.require(pt::bitwise_equal(part.final_estimate(), full.estimates[t - 1]), "tensor stage " + std::to_string(t));

    // The CLI path: its PNG must equal the PNG of trace element t.
    std::ostringstream out, err;
    const auto got = dir / ("cli" + std::to_string(t) + ".png");
    const int code = cli::run({"derain", "--model", (dir / "m.prnc").string(), "--input", (dir / "in.png").string(),
                               "--output", got.string(), "--stop-at-stage", std::to_string(t)},
                              out, err);
    save_image(full.estimates[t - 1], dir / "ref.png");
    v.require(code == 0 && pt::read_bytes(got) == pt::read_bytes(dir / "ref.png"), "cli stage " + std::to_string(t));
  }
  v.detail << " PReNet T=6 on 64x64, t=1..6 bitwise equal (tensor and --stop-at-stage output)";
}

// --- SSIM / PSNR ------------------------------------------------------------

void metric_properties(Verdict& v) {
  const auto x = pt::random_tensor<double>({1, 3, 32, 32}, 1, 0, 1);
  const auto y = pt::random_tensor<double>({1, 3, 32, 32}, 2, 0, 1);
  const double self = ssim(x, x).item();
  const double asym = std::abs(ssim(x, y).item() - ssim(y, x).item());
  const double closed =
      ssim(Tensor<double>::full({1, 3, 32, 32}, 0.2), Tensor<double>::full({1, 3, 32, 32}, 0.8)).item();
  const double p = psnr(x, add_scalar(x, 0.1));
  v.detail << " ssim(x,x)=" << std::setprecision(12) << self << " |asym|=" << asym << " const(0.2,0.8)=" << closed
           << " psnr(0.1 err)=" << p;
  v.require(std::abs(self - 1.0) <= 1e-9, "self similarity");
  v.require(asym <= 1e-12, "symmetry");
  v.require(std::abs(closed - 0.47066) <= 1e-4, "constant closed form");
  v.require(std::abs(p - 20.0) <= 1e-9, "psnr");
}

// --- schedule ---------------------------------------------------------------

void schedule(Verdict& v) {
  const TrainConfig tc;
  const std::pair<int, double> cases[] = {{29, 1e-3}, {30, 2e-4}, {50, 4e-5}, {80, 8e-6}};
  for (const auto& [epoch, expect] : cases) {
    const double got = lr_at(epoch, tc);
    v.detail << " e" << epoch << '=' << got;
    v.require(std::abs(got - expect) <= 1e-15 * expect, "epoch " + std::to_string(epoch));
  }
}

// --- desk-scale training ----------------------------------------------------

struct DeskData {
  std::vector<ImagePair> train;
  std::vector<ImagePair> held_out;
};

// Written and read back through the PNG pipeline, like `prenet synth`.
DeskData desk_data(const std::filesystem::path& root) {
  for (int i = 0; i < 20; ++i) {
    RainParams rp;
    rp.seed = 1000 + static_cast<std::uint64_t>(i);
    const auto pair = synthesize_pair(synthesize_background(80, 80, 500 + static_cast<std::uint64_t>(i)), rp);
    char name[16];
    std::snprintf(name, sizeof name, "%04d.png", i);
    write_pair(root / (i < 16 ? "train" : "test"), name, pair.rainy, pair.clean);
  }
  return {load_pairs(scan_dataset(root / "train")), load_pairs(scan_dataset(root / "test"))};
}

NetworkConfig desk_net() {
  NetworkConfig cfg = NetworkConfig::prenet();
  cfg.stages = 4;
  return cfg;
}

TrainConfig desk_train() {
  TrainConfig tc;
  tc.patch_size = 64;
  tc.batch_size = 4;
  tc.epochs = 75;  // 16 pairs / batch 4 = 4 steps per epoch, 300 steps
  tc.lr_milestones = {23, 38, 60};
  tc.checkpoint_every = 0;
  tc.seed = 2019;
  return tc;
}

// Objective over the whole training set (full 80x80 images).
double full_set_loss(const ParameterSet<float>& params, const NetworkConfig& cfg, std::span<const ImagePair> set,
                     const LossSpec& loss) {
  double total = 0.0;
  const auto frozen = params.clone(false);
  for (const auto& p : set) total += training_loss(forward(frozen, cfg, p.rainy), p.clean, loss).item();
  return total / static_cast<double>(set.size());
}

struct DeskRun {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double rainy_psnr = 0.0;
  std::vector<double> stage_psnr;
  std::int64_t steps = 0;
};

DeskRun desk_run(const DeskData& data, const std::filesystem::path& out, const LossSpec& loss) {
  const auto cfg = desk_net();
  const auto tc = desk_train();
  const auto result = train(cfg, tc, loss, data.train, {}, out);
  const auto init = load_checkpoint(out / "checkpoint_init.prnc");
  const auto fin = load_checkpoint(result.final_checkpoint);
  DeskRun r;
  r.steps = result.steps;
  r.initial_loss = full_set_loss(init.params, cfg, data.train, loss);
  r.final_loss = full_set_loss(fin.params, cfg, data.train, loss);
  r.rainy_psnr = mean_metrics(evaluate_inputs(data.held_out)).psnr;
  for (int t = 1; t <= cfg.stages; ++t) r.stage_psnr.push_back(mean_metrics(evaluate(fin.params, cfg, data.held_out, t)).psnr);
  return r;
}

void describe(Verdict& v, const DeskRun& r) {
  v.detail << std::setprecision(6) << ' ' << r.steps << " steps, train loss " << r.initial_loss << " -> "
           << r.final_loss << ", held-out PSNR rainy " << r.rainy_psnr << " dB, stages";
  for (double p : r.stage_psnr) v.detail << ' ' << p;
}

// --- checkpoints ------------------------------------------------------------

void checkpoint_round_trip(Verdict& v) {
  pt::TempDir dir("accept_ckpt");
  int rejected = 0, attempts = 0;
  for (const auto& cfg : {NetworkConfig::prn(), NetworkConfig::prenet(), NetworkConfig::prn_r(), NetworkConfig::prenet_r()}) {
    const auto params = build<float>(cfg, 3);
    TrainerSnapshot snap;
    snap.step = 77;
    snap.epoch = 5;
    snap.first_moment.assign(static_cast<std::size_t>(params.total_count()), 0.5f);
    snap.second_moment.assign(static_cast<std::size_t>(params.total_count()), 0.25f);
    const auto path = dir / "m.prnc";
    save_checkpoint(path, params, cfg, &snap);
    const auto back = load_checkpoint(path);
    const auto a = params.flatten();
    const auto b = back.params.flatten();
    v.require(back.config == cfg && a.size() == b.size() &&
                  std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0 && back.trainer &&
                  back.trainer->first_moment == snap.first_moment && back.trainer->second_moment == snap.second_moment,
              "round trip");

    const auto bytes = pt::read_bytes(path);
    std::vector<std::vector<char>> damaged;
    for (std::size_t len : {std::size_t{0}, std::size_t{6}, std::size_t{30}, bytes.size() / 3, bytes.size() - 1})
      damaged.emplace_back(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len));
    for (std::size_t at : {std::size_t{1}, std::size_t{5}, bytes.size() / 2, bytes.size() - 2}) {
      auto b2 = bytes;
      b2[at] = static_cast<char>(b2[at] ^ 0x5a);
      damaged.push_back(std::move(b2));
    }
    for (const auto& d : damaged) {
      ++attempts;
      pt::write_bytes(dir / "bad.prnc", d);
      try {
        load_checkpoint(dir / "bad.prnc");
      } catch (const FormatError&) {
        ++rejected;
      }
    }
  }
  v.detail << " 4 configs bitwise lossless, " << rejected << "/" << attempts << " damaged files rejected";
  v.require(rejected == attempts, "damaged file accepted");
}

}  // namespace

int main() {
  criterion("parameter-count oracle", parameter_counts);
  criterion("gradient suite", gradient_suite);
  criterion("weight-sharing equivalence", weight_sharing);
  criterion("stage-prefix bit-exactness", stage_prefix);
  criterion("SSIM/PSNR properties", metric_properties);
  criterion("schedule oracle", schedule);

  pt::TempDir dir("accept_desk");
  const DeskData data = desk_data(dir / "data");

  criterion("desk-scale training (neg-SSIM)", [&](Verdict& v) {
    const auto r = desk_run(data, dir / "neg_ssim", {LossKind::kNegSsim, {}});
    describe(v, r);
    v.require(r.final_loss < r.initial_loss, "(a) training loss did not decrease");
    v.require(r.stage_psnr.back() - r.rainy_psnr >= 2.0, "(b) held-out gain below 2 dB");
  });

  criterion("loss-variant smoke parity (MSE, RecSSIM)", [&](Verdict& v) {
    const auto mse = desk_run(data, dir / "mse", {LossKind::kMse, {}});
    v.detail << " MSE:";
    describe(v, mse);
    v.require(mse.final_loss < mse.initial_loss, "MSE loss did not decrease");
    const auto rec = desk_run(data, dir / "rec", {LossKind::kRecNegSsim, {0.5, 0.5, 0.5, 1.5}});
    v.detail << " | RecSSIM:";
    describe(v, rec);
    v.require(rec.final_loss < rec.initial_loss, "RecSSIM loss did not decrease");
    v.require(rec.stage_psnr.front() > rec.rainy_psnr, "RecSSIM stage-1 PSNR not above rainy input");
  });

  criterion("checkpoint round-trip", checkpoint_round_trip);

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
