#pragma once

#include "bfpn/ops.hpp"

namespace bfpn {

inline constexpr double kBcePredClamp = 1e-7;  // guards log(0)
inline constexpr double kJaccardSmooth = 1.0;  // guards empty masks

// Mean binary cross-entropy over all elements; predictions are clamped to
// [delta, 1-delta] and the clamp has zero gradient.
template <typename T>
Tensor<T> bce(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::check(pred.same_shape(target), "bce: shape mismatch");
  const size_t n = pred.numel();
  detail::check(n > 0, "bce: empty input");
  const double lo = kBcePredClamp, hi = 1.0 - kBcePredClamp;
  const T* p = pred.data();
  const T* y = target.data();
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double pi = double(p[i]);
    double pc = pi < lo ? lo : (pi > hi ? hi : pi);
    acc -= double(y[i]) * std::log(pc) +
           (1.0 - double(y[i])) * std::log(1.0 - pc);
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / double(n)));
  if (recording<T>({&pred})) {
    out.set_requires_grad(true);
    auto pd = pred.ptr(), yd = target.ptr(), od = out.ptr();
    Tape<T>::get().record([pd, yd, od, n, lo, hi]() {
      if (od->grad.empty() || !pd->requires_grad) return;
      const double g = double(od->grad[0]);
      const T* p = pd->value.data();
      const T* y = yd->value.data();
      T* gp = detail::ensure_grad(pd);
      for (size_t i = 0; i < n; ++i) {
        double pi = double(p[i]);
        if (pi < lo || pi > hi) continue;  // clamped region
        double d = -(double(y[i]) / pi - (1.0 - double(y[i])) / (1.0 - pi));
        gp[i] += static_cast<T>(g * d / double(n));
      }
    });
  }
  return out;
}

// (sum p*y + eps) / (sum p + sum y - sum p*y + eps) with eps = 1.
template <typename T>
Tensor<T> soft_jaccard(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::check(pred.same_shape(target), "soft_jaccard: shape mismatch");
  const size_t n = pred.numel();
  const T* p = pred.data();
  const T* y = target.data();
  double inter = 0.0, sp = 0.0, sy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    inter += double(p[i]) * double(y[i]);
    sp += double(p[i]);
    sy += double(y[i]);
  }
  const double num = inter + kJaccardSmooth;
  const double den = sp + sy - inter + kJaccardSmooth;
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(num / den));
  if (recording<T>({&pred})) {
    out.set_requires_grad(true);
    auto pd = pred.ptr(), yd = target.ptr(), od = out.ptr();
    Tape<T>::get().record([pd, yd, od, n, num, den]() {
      if (od->grad.empty() || !pd->requires_grad) return;
      const double g = double(od->grad[0]);
      const T* y = yd->value.data();
      T* gp = detail::ensure_grad(pd);
      const double den2 = den * den;
      for (size_t i = 0; i < n; ++i) {
        double yi = double(y[i]);
        double d = (yi * den - num * (1.0 - yi)) / den2;
        gp[i] += static_cast<T>(g * d);
      }
    });
  }
  return out;
}

struct LossValue {
  double total = 0;
  double bce_heart = 0, bce_lungs = 0;
  double jaccard_heart = 0, jaccard_lungs = 0;
};

template <typename T>
struct LossResult {
  Tensor<T> total;  // scalar, wired for backward
  LossValue value;
};

// sum over classes {heart, lungs} of BCE - soft-Jaccard.
template <typename T>
LossResult<T> total_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::check(pred.ndim() == 4 && pred.dim(1) == 2,
                "total_loss: pred must be [N,2,H,W]");
  detail::check(pred.same_shape(target), "total_loss: shape mismatch");
  Tensor<T> ph = slice_channels(pred, 0, 1), pl = slice_channels(pred, 1, 1);
  Tensor<T> th = slice_channels(target, 0, 1), tl = slice_channels(target, 1, 1);
  Tensor<T> bce_h = bce(ph, th), bce_l = bce(pl, tl);
  Tensor<T> jac_h = soft_jaccard(ph, th), jac_l = soft_jaccard(pl, tl);
  Tensor<T> total =
      add(add(bce_h, neg(jac_h)), add(bce_l, neg(jac_l)));
  LossResult<T> r;
  r.total = total;
  r.value.bce_heart = double(bce_h.item());
  r.value.bce_lungs = double(bce_l.item());
  r.value.jaccard_heart = double(jac_h.item());
  r.value.jaccard_lungs = double(jac_l.item());
  r.value.total = double(total.item());
  return r;
}

}  // namespace bfpn
