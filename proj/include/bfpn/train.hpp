#pragma once

#include "bfpn/loss.hpp"
#include "bfpn/model.hpp"
#include "bfpn/optim.hpp"
#include "bfpn/phantom.hpp"

namespace bfpn {

struct AugmentationSpec {
  bool enabled = true;
  double crop_p = 0.5;
  double crop_scale_lo = 0.7, crop_scale_hi = 1.0;  // area fraction
  double rotate_p = 0.5;
  double rotate_deg = 5.0;
  double noise_p = 0.05;
  double noise_sigma = 0.02;
  double blur_p = 0.05;
  double sharpen_p = 0.05;
  double sharpen_amount = 0.5;
  double brightness_p = 0.01;
  double brightness_delta = 0.2;
  double hflip_p = 0.01;
};

// Geometric transforms hit image and both masks identically (masks
// re-binarized at 0.5 after interpolation); photometric transforms hit the
// image only. Deterministic given the key.
PhantomSample augment(const PhantomSample& sample, const AugmentationSpec& spec,
                      uint64_t key);

struct TrainConfig {
  int batch_size = 8;
  double learning_rate = 1e-4;
  double beta1 = 0.9, beta2 = 0.999;
  double adam_eps = 1e-8;
  int steps = 3000;
  uint64_t seed = 0;
  AugmentationSpec aug;
  int eval_every = 100;

  void validate() const {
    if (batch_size < 1) throw UsageError("train: batch_size must be >= 1");
    if (learning_rate <= 0) throw UsageError("train: learning_rate must be > 0");
    if (steps < 1) throw UsageError("train: steps must be >= 1");
  }
};

struct TrainResult {
  std::vector<LossValue> history;
  double best_val_iou = 0;
  int best_step = -1;
  std::vector<std::vector<float>> best_params;   // snapshot at best val IoU
  std::vector<std::vector<float>> final_params;  // snapshot after last step
  int64_t adam_t = 0;
};

// Assemble [B,1,S,S] image and [B,2,S,S] target tensors.
std::pair<Tensor<float>, Tensor<float>> make_batch(
    const std::vector<const PhantomSample*>& batch);

// Eval-mode forward over a set; mean of heart and lungs IoU at threshold 0.5.
double eval_mean_iou(BayesianFpn<float>& model,
                     const std::vector<PhantomSample>& samples);

// Adam on BCE - soft-Jaccard; returns per-step loss history and both final
// and best-validation parameter snapshots. Fully deterministic given the
// seed; throws NumericError on a non-finite loss.
TrainResult train(BayesianFpn<float>& model,
                  const std::vector<PhantomSample>& train_set,
                  const std::vector<PhantomSample>& val_set,
                  const TrainConfig& cfg, Adam<float>* adam = nullptr);

}  // namespace bfpn
