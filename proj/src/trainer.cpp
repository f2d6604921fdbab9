#include "prenet/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "prenet/evaluation.hpp"
#include "prenet/ops.hpp"

namespace prenet {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (patch_size <= 0) fail("patch_size must be positive");
  if (batch_size <= 0) fail("batch_size must be positive");
  if (epochs < 0) fail("epochs must be >= 0");
  if (!(lr_initial > 0.0)) fail("lr_initial must be positive");
  if (!(lr_decay > 0.0)) fail("lr_decay must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail("ADAM betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (validate_every <= 0) fail("validate_every must be positive");
  for (std::size_t i = 0; i < lr_milestones.size(); ++i) {
    if (lr_milestones[i] <= 0) fail("milestones must be positive");
    if (i > 0 && lr_milestones[i] <= lr_milestones[i - 1]) fail("milestones must be strictly increasing");
    if (lr_milestones[i] >= epochs && epochs > 0) fail("milestone " + std::to_string(lr_milestones[i]) +
                                                        " is not below epochs=" + std::to_string(epochs));
  }
}

double lr_at(int epoch, const TrainConfig& config) {
  double lr = config.lr_initial;
  for (int m : config.lr_milestones) {
    if (m <= epoch) lr *= config.lr_decay;
  }
  return lr;
}

template <typename T>
AdamState<T> AdamState<T>::zeros_like(const ParameterSet<T>& params) {
  AdamState s;
  for (const auto& e : params) {
    s.first_moment.emplace_back(static_cast<std::size_t>(e.value.numel()), T(0));
    s.second_moment.emplace_back(static_cast<std::size_t>(e.value.numel()), T(0));
  }
  return s;
}

template <typename T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state, double lr, const TrainConfig& config) {
  if (state.first_moment.size() != params.size()) throw ContractError("adam_step: state does not match parameters");
  for (const auto& e : params) {
    for (T g : e.value.grad_view()) {
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in '" + e.name + "'");
    }
  }
  state.step += 1;
  const T b1 = static_cast<T>(config.adam_beta1);
  const T b2 = static_cast<T>(config.adam_beta2);
  const T eps = static_cast<T>(config.adam_eps);
  const T correction1 = static_cast<T>(1.0 - std::pow(config.adam_beta1, static_cast<double>(state.step)));
  const T correction2 = static_cast<T>(1.0 - std::pow(config.adam_beta2, static_cast<double>(state.step)));
  const T rate = static_cast<T>(lr);

  auto& entries = params.entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    auto values = entries[p].value.mutable_data();
    const auto grad = entries[p].value.grad_view();
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T g = grad.empty() ? T(0) : grad[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      const T m_hat = m[i] / correction1;
      const T v_hat = v[i] / correction2;
      values[i] -= rate * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

Tensor<float> crop(const Tensor<float>& image, std::int64_t y, std::int64_t x, std::int64_t size) {
  const Shape s = image.shape();
  if (s.n != 1 || y < 0 || x < 0 || y + size > s.h || x + size > s.w) {
    throw ContractError("crop window outside image " + s.str());
  }
  std::vector<float> out(static_cast<std::size_t>(s.c * size * size));
  const auto d = image.data();
  for (std::int64_t c = 0; c < s.c; ++c) {
    for (std::int64_t r = 0; r < size; ++r) {
      const auto src = d.begin() + ((c * s.h + y + r) * s.w + x);
      std::copy(src, src + size, out.begin() + (c * size + r) * size);
    }
  }
  return Tensor<float>::from_vector({1, s.c, size, size}, std::move(out));
}

PatchBatch sample_patch_batch(std::span<const ImagePair> dataset, int patch_size, int batch_size, Rng& rng,
                              bool strict, std::ostream* warnings) {
  if (patch_size <= 0 || batch_size <= 0) throw ContractError("patch and batch sizes must be positive");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Shape s = dataset[i].rainy.shape();
    if (s.h >= patch_size && s.w >= patch_size) {
      eligible.push_back(i);
      continue;
    }
    const std::string msg = "image '" + dataset[i].name + "' (" + std::to_string(s.h) + "x" +
                            std::to_string(s.w) + ") is smaller than the " + std::to_string(patch_size) +
                            " px patch";
    if (strict) throw ContractError(msg);
    if (warnings) *warnings << "warning: skipping " << msg << '\n';
  }
  if (eligible.empty()) throw ContractError("no image is large enough for the patch size");

  const std::int64_t p = patch_size;
  const std::int64_t plane = 3 * p * p;
  std::vector<float> rainy(static_cast<std::size_t>(batch_size * plane));
  std::vector<float> clean(rainy.size());
  PatchBatch batch;
  for (int b = 0; b < batch_size; ++b) {
    const std::size_t idx = eligible[rng.below(eligible.size())];
    const ImagePair& pair = dataset[idx];
    const Shape s = pair.rainy.shape();
    const std::int64_t y = rng.range(0, s.h - p);
    const std::int64_t x = rng.range(0, s.w - p);
    const auto r = crop(pair.rainy, y, x, p);
    const auto c = crop(pair.clean, y, x, p);
    std::copy(r.data().begin(), r.data().end(), rainy.begin() + b * plane);
    std::copy(c.data().begin(), c.data().end(), clean.begin() + b * plane);
    batch.origins.push_back({idx, y, x});
  }
  const Shape bs{batch_size, 3, p, p};
  batch.rainy = Tensor<float>::from_vector(bs, std::move(rainy));
  batch.clean = Tensor<float>::from_vector(bs, std::move(clean));
  return batch;
}

namespace {

TrainerSnapshot snapshot(const AdamState<float>& state, int next_epoch) {
  TrainerSnapshot snap;
  snap.step = state.step;
  snap.epoch = next_epoch;
  for (const auto& m : state.first_moment) snap.first_moment.insert(snap.first_moment.end(), m.begin(), m.end());
  for (const auto& v : state.second_moment) snap.second_moment.insert(snap.second_moment.end(), v.begin(), v.end());
  return snap;
}

AdamState<float> restore(const TrainerSnapshot& snap, const ParameterSet<float>& params) {
  AdamState<float> state = AdamState<float>::zeros_like(params);
  state.step = snap.step;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < state.first_moment.size(); ++p) {
    const std::size_t n = state.first_moment[p].size();
    std::copy_n(snap.first_moment.begin() + static_cast<std::ptrdiff_t>(offset), n, state.first_moment[p].begin());
    std::copy_n(snap.second_moment.begin() + static_cast<std::ptrdiff_t>(offset), n, state.second_moment[p].begin());
    offset += n;
  }
  return state;
}

std::string format_value(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

fs::path epoch_checkpoint(const fs::path& dir, int epoch) {
  char name[64];
  std::snprintf(name, sizeof name, "checkpoint_e%04d.prnc", epoch);
  return dir / name;
}

}  // namespace

TrainResult train(const NetworkConfig& net_config, const TrainConfig& train_config, const LossSpec& loss,
                  std::span<const ImagePair> train_set, std::span<const ImagePair> val_set, const fs::path& out_dir,
                  const TrainOptions& options) {
  net_config.validate();
  train_config.validate();
  loss.validate(net_config.stages);
  if (train_config.epochs > 0 && train_set.empty()) throw ContractError("training set is empty");

  fs::create_directories(out_dir);
  std::ostream* progress = options.progress;

  ParameterSet<float> params;
  AdamState<float> adam;
  int start_epoch = 0;
  if (options.resume) {
    Checkpoint ck = load_checkpoint(*options.resume);
    if (!(ck.config == net_config)) throw ConfigError("resume checkpoint was trained with a different network config");
    if (!ck.trainer) throw ConfigError("checkpoint '" + options.resume->string() + "' has no trainer state");
    params = std::move(ck.params);
    adam = restore(*ck.trainer, params);
    start_epoch = ck.trainer->epoch;
  } else {
    params = build<float>(net_config, train_config.seed);
    adam = AdamState<float>::zeros_like(params);
    const auto snap = snapshot(adam, 0);
    save_checkpoint(out_dir / "checkpoint_init.prnc", params, net_config, &snap);
  }

  std::ofstream log(out_dir / "train_log.tsv", std::ios::app);
  if (!log) throw IoError("cannot open training log in '" + out_dir.string() + "'");
  log << std::setprecision(9);

  TrainResult result;
  const std::int64_t steps_per_epoch =
      (static_cast<std::int64_t>(train_set.size()) + train_config.batch_size - 1) / train_config.batch_size;

  for (int epoch = start_epoch; epoch < train_config.epochs; ++epoch) {
    const double lr = lr_at(epoch, train_config);
    result.epoch_lrs.push_back(lr);
    Rng rng({train_config.seed, static_cast<std::uint64_t>(epoch)});
    double epoch_loss = 0.0;
    for (std::int64_t it = 0; it < steps_per_epoch; ++it) {
      const PatchBatch batch = sample_patch_batch(train_set, train_config.patch_size, train_config.batch_size, rng,
                                                  train_config.strict_patches, progress);
      params.zero_grad();
      const auto trace = forward(params, net_config, batch.rainy);
      const Tensor<float> objective = training_loss(trace, batch.clean, loss);
      const double value = objective.item();
      try {
        if (!std::isfinite(value)) throw NumericalError("non-finite loss at step " + std::to_string(adam.step + 1));
        backward(objective);
        adam_step(params, adam, lr, train_config);
      } catch (const NumericalError&) {
        const auto snap = snapshot(adam, epoch);
        save_checkpoint(out_dir / "checkpoint_last_good.prnc", params, net_config, &snap);
        throw;
      }
      epoch_loss += value;
      result.iteration_losses.push_back(value);
      log << epoch << '\t' << adam.step << '\t' << value << '\t' << lr << '\n';
      if (progress) {
        *progress << "epoch " << epoch << " step " << adam.step << " loss " << format_value(value)
                  << " lr " << lr << '\n';
      }
    }

    if (!val_set.empty() && (epoch + 1) % train_config.validate_every == 0) {
      const auto rows = evaluate(params, net_config, val_set);
      const ImageMetrics m = mean_metrics(rows);
      log << epoch << '\t' << adam.step << '\t' << epoch_loss / static_cast<double>(steps_per_epoch) << '\t' << lr
          << '\t' << m.psnr << '\t' << m.ssim << '\n';
      if (progress) *progress << "epoch " << epoch << " val psnr " << m.psnr << " ssim " << m.ssim << '\n';
    }
    log.flush();
    if (train_config.checkpoint_every > 0 && (epoch + 1) % train_config.checkpoint_every == 0) {
      const auto snap = snapshot(adam, epoch + 1);
      save_checkpoint(epoch_checkpoint(out_dir, epoch + 1), params, net_config, &snap);
    }
  }

  const auto snap = snapshot(adam, std::max(start_epoch, train_config.epochs));
  result.final_checkpoint = out_dir / "checkpoint_final.prnc";
  save_checkpoint(result.final_checkpoint, params, net_config, &snap);
  result.steps = adam.step;
  return result;
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(ParameterSet<float>&, AdamState<float>&, double, const TrainConfig&);
template void adam_step(ParameterSet<double>&, AdamState<double>&, double, const TrainConfig&);

}  // namespace prenet
