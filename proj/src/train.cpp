#include "bfpn/train.hpp"

#include <cmath>

#include "bfpn/eval.hpp"

namespace bfpn {

std::pair<Tensor<float>, Tensor<float>> make_batch(
    const std::vector<const PhantomSample*>& batch) {
  if (batch.empty()) throw std::invalid_argument("make_batch: empty batch");
  const int B = int(batch.size());
  const int S = batch[0]->size;
  Tensor<float> img({B, 1, S, S});
  Tensor<float> tgt({B, 2, S, S});
  const size_t npx = size_t(S) * S;
  for (int b = 0; b < B; ++b) {
    const PhantomSample& s = *batch[size_t(b)];
    if (s.size != S) throw std::invalid_argument("make_batch: size mismatch");
    std::copy_n(s.image.data(), npx, img.data() + size_t(b) * npx);
    float* th = tgt.data() + size_t(b) * 2 * npx;
    float* tl = th + npx;
    for (size_t i = 0; i < npx; ++i) {
      th[i] = float(s.heart_mask[i]);
      tl[i] = float(s.lungs_mask[i]);
    }
  }
  return {img, tgt};
}

double eval_mean_iou(BayesianFpn<float>& model,
                     const std::vector<PhantomSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("eval_mean_iou: empty set");
  NoGradGuard ng;
  const int S = model.config().input_size;
  const size_t npx = size_t(S) * S;
  std::vector<uint8_t> heart(npx), lungs(npx);
  double acc = 0;
  for (const auto& s : samples) {
    Tensor<float> img = Tensor<float>::from_data({1, 1, S, S}, s.image);
    Tensor<float> out = model.forward(img, LayerMode::Eval, RngStream{});
    const float* p = out.data();
    for (size_t i = 0; i < npx; ++i) {
      heart[i] = p[i] > 0.5f ? 1 : 0;
      lungs[i] = p[npx + i] > 0.5f ? 1 : 0;
    }
    acc += 0.5 * (iou(heart.data(), s.heart_mask.data(), npx) +
                  iou(lungs.data(), s.lungs_mask.data(), npx));
  }
  return acc / double(samples.size());
}

TrainResult train(BayesianFpn<float>& model,
                  const std::vector<PhantomSample>& train_set,
                  const std::vector<PhantomSample>& val_set,
                  const TrainConfig& cfg, Adam<float>* adam_in) {
  cfg.validate();
  if (train_set.empty()) throw UsageError("train: empty training set");

  Adam<float> local_adam(model.params(), cfg.learning_rate, cfg.beta1,
                         cfg.beta2, cfg.adam_eps);
  Adam<float>& adam = adam_in ? *adam_in : local_adam;

  TrainResult result;
  result.history.reserve(size_t(cfg.steps));

  const size_t n_train = train_set.size();
  std::vector<PhantomSample> aug_batch(size_t(cfg.batch_size));
  std::vector<const PhantomSample*> batch_ptrs(size_t(cfg.batch_size));

  for (int step = 0; step < cfg.steps; ++step) {
    for (int j = 0; j < cfg.batch_size; ++j) {
      const uint64_t slot = uint64_t(step) * uint64_t(cfg.batch_size) + uint64_t(j);
      const size_t idx =
          rng::uniform_int(rng::key3(cfg.seed, 0xba7cull, slot), n_train);
      if (cfg.aug.enabled) {
        aug_batch[size_t(j)] =
            augment(train_set[idx], cfg.aug, rng::key3(cfg.seed, 0xa716ull, slot));
        batch_ptrs[size_t(j)] = &aug_batch[size_t(j)];
      } else {
        batch_ptrs[size_t(j)] = &train_set[idx];
      }
    }
    auto [img, tgt] = make_batch(batch_ptrs);

    LossResult<float> loss;
    try {
      Tensor<float> pred =
          model.forward(img, LayerMode::Train, RngStream{cfg.seed, uint64_t(step)});
      loss = total_loss(pred, tgt);
    } catch (...) {
      Tape<float>::get().clear();
      throw;
    }
    if (!std::isfinite(loss.value.total)) {
      Tape<float>::get().clear();
      throw NumericError("train: non-finite loss at step " +
                         std::to_string(step));
    }
    backward(loss.total);
    adam.step();
    model.params().zero_grad();
    result.history.push_back(loss.value);

    const bool last = step == cfg.steps - 1;
    if (!val_set.empty() &&
        ((step + 1) % cfg.eval_every == 0 || last)) {
      double v = eval_mean_iou(model, val_set);
      if (v > result.best_val_iou || result.best_step < 0) {
        result.best_val_iou = v;
        result.best_step = step;
        result.best_params = model.snapshot();
      }
    }
  }
  result.final_params = model.snapshot();
  if (result.best_step < 0) {  // no validation set
    result.best_params = result.final_params;
    result.best_step = cfg.steps - 1;
    result.best_val_iou = std::nan("");
  }
  result.adam_t = adam.t();
  return result;
}

}  // namespace bfpn
