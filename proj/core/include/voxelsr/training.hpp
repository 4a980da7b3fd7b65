#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "voxelsr/model.hpp"
#include "voxelsr/tensor.hpp"
#include "voxelsr/volume.hpp"

namespace voxelsr {

struct TrainConfig {
  double scale_min = 2.0;  // drawn with one-decimal granularity
  double scale_max = 6.0;
  double lambda = 1.0;     // cycle-loss weight
  double lr = 1e-4;
  std::int64_t lr_half_every = 200;  // epochs
  std::int64_t epochs = 3000;
  std::int64_t steps_per_epoch = 100;
  Dims patch_lr{32, 32, 8};
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0;  // epochs; 0 disables intermediate checkpoints
  ModelConfig model = ModelConfig::full();

  void validate() const;
  /// lr * 0.5^floor(epoch / lr_half_every).
  double lr_at_epoch(std::int64_t epoch) const;
  /// HR patch depth at scale r: round((pz - 1) * r) + 1.
  std::int64_t hr_patch_depth(double r) const;
};

/// Flat `key = value` text; '#' starts a comment. Unknown keys are errors.
/// Keys: scale_min scale_max lambda lr lr_half_every epochs steps_per_epoch
/// patch_lr (px,py,pz) seed checkpoint_every code_length channels blocks
/// layers_per_block hidden use_lam.
TrainConfig parse_train_config(const std::string& text);
std::string format_train_config(const TrainConfig& cfg);

struct TrainSample {
  Volume lr_patch;
  Volume hr_patch;
  double scale = 0.0;
  CoordBatch hr_coords;  // full HR patch lattice, shared normalized frame
  CoordBatch lr_coords;  // full LR patch lattice, shared normalized frame
};

/// Deterministic pair at a given scale and HR-patch origin.
TrainSample make_pair(const Volume& hr_volume, double r, const Dims& origin, const Dims& patch_lr);

/// Random scale from {scale_min, scale_min + 0.1, ..., scale_max} and random crop.
TrainSample sample_pair(const Volume& hr_volume, const TrainConfig& cfg, std::mt19937_64& rng);

/// Mean L1 between the dense HR prediction and the HR patch.
template <typename T>
BasicTensor<T> inr_loss(const BasicTensor<T>& prediction, const Volume& hr_patch);

/// Re-encodes the (non-detached) HR prediction with the same parameters,
/// queries it on the LR lattice and compares to the LR patch with mean L1.
template <typename T>
BasicTensor<T> cycle_loss(const ModelParams<T>& params, const TrainSample& sample,
                          const BasicTensor<T>& hr_prediction);

/// inr + lambda * cycle.
template <typename T>
BasicTensor<T> total_loss(const BasicTensor<T>& inr, const BasicTensor<T>& cycle, double lambda);

template <typename T>
struct LossTerms {
  BasicTensor<T> inr;
  BasicTensor<T> cycle;  // scalar 0 with no graph when lambda == 0
  BasicTensor<T> total;
};

/// One full forward of both loss paths for a sample.
template <typename T>
LossTerms<T> compute_losses(const ModelParams<T>& params, const TrainSample& sample, double lambda);

/// Adam (beta1 0.9, beta2 0.999, eps 1e-8, bias-corrected) over a fixed
/// parameter list. Parameters without a gradient are treated as zero-grad.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<Tensor> params);

  void step(double lr);
  void zero_grad();
  std::int64_t steps_taken() const noexcept { return step_; }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> m_, v_;
  std::int64_t step_ = 0;
};

struct LossRecord {
  std::int64_t epoch = 0;
  std::int64_t step = 0;
  double inr = 0.0;
  double cycle = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

std::string loss_csv_header();
std::string format_loss_row(const LossRecord& r);

struct TrainHooks {
  std::function<void(const LossRecord&)> on_step;
  /// Epoch-mean losses; `record.step` holds the epoch's last step index.
  std::function<void(const LossRecord&)> on_epoch;
  std::function<void(std::int64_t epoch, const ModelParams<float>&)> on_checkpoint;
};

struct TrainResult {
  ModelParams<float> params;
  std::vector<LossRecord> history;
};

/// Thrown when a loss becomes non-finite; carries the global step index.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::int64_t step, const std::string& what) : std::runtime_error(what), step_(step) {}
  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

TrainResult train(const std::vector<Volume>& volumes, const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Continue training from existing parameters (copied, not modified).
TrainResult train(const std::vector<Volume>& volumes, const TrainConfig& cfg, const ModelParams<float>& initial,
                  const TrainHooks& hooks = {});

}  // namespace voxelsr
