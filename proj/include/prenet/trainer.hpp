#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "prenet/checkpoint.hpp"
#include "prenet/dataset.hpp"
#include "prenet/network.hpp"
#include "prenet/objectives.hpp"
#include "prenet/random.hpp"

namespace prenet {

// Defaults are the standard PReNet training protocol.
struct TrainConfig {
  int patch_size = 100;
  int batch_size = 18;
  int epochs = 100;
  double lr_initial = 1e-3;
  std::vector<int> lr_milestones{30, 50, 80};
  double lr_decay = 0.2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  // 0 disables periodic checkpoints; the final one is always written.
  int checkpoint_every = 10;
  // Epochs between validation passes, when a validation set is given.
  int validate_every = 1;
  // Fail on images smaller than the patch instead of skipping them.
  bool strict_patches = true;

  void validate() const;
};

// lr_initial * lr_decay^(number of milestones <= epoch).
double lr_at(int epoch, const TrainConfig& config);

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  std::int64_t step = 0;

  static AdamState zeros_like(const ParameterSet<T>& params);
};

/// One bias-corrected ADAM update from the gradients stored on `params`.
/// Raises NumericalError, leaving params and state untouched, when any
/// gradient is non-finite.
template <typename T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state, double lr, const TrainConfig& config);

struct PatchOrigin {
  std::size_t image = 0;
  std::int64_t y = 0;
  std::int64_t x = 0;
};

struct PatchBatch {
  Tensor<float> rainy;  // (batch, 3, patch, patch)
  Tensor<float> clean;
  std::vector<PatchOrigin> origins;
};

// Aligned random crops. Per patch: image index, then row, then column.
PatchBatch sample_patch_batch(std::span<const ImagePair> dataset, int patch_size, int batch_size, Rng& rng,
                              bool strict = true, std::ostream* warnings = nullptr);

// Crop one window from a (1,3,h,w) tensor.
Tensor<float> crop(const Tensor<float>& image, std::int64_t y, std::int64_t x, std::int64_t size);

struct TrainOptions {
  // Continue from a checkpoint that carries a trainer section.
  std::optional<std::filesystem::path> resume;
  // Progress lines; nullptr for silence.
  std::ostream* progress = nullptr;
};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::vector<double> iteration_losses;
  // Learning rate used by each epoch that ran.
  std::vector<double> epoch_lrs;
  std::int64_t steps = 0;
};

/// Trains a fresh network (or resumes one) and writes into `out_dir`:
///   checkpoint_init.prnc    before the first step of a fresh run
///   checkpoint_eNNNN.prnc   every checkpoint_every epochs
///   checkpoint_final.prnc   after the last epoch
///   train_log.tsv           `epoch iter loss lr [val_psnr val_ssim]`
///
/// Each epoch runs ceil(|dataset| / batch_size) steps. Batches of epoch e
/// are drawn from Rng{seed, e}, so a resumed run replays the same batches
/// as an uninterrupted one. A non-finite loss or gradient writes
/// checkpoint_last_good.prnc and raises NumericalError.
TrainResult train(const NetworkConfig& net_config, const TrainConfig& train_config, const LossSpec& loss,
                  std::span<const ImagePair> train_set, std::span<const ImagePair> val_set,
                  const std::filesystem::path& out_dir, const TrainOptions& options = {});

}  // namespace prenet
