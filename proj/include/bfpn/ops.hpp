#pragma once

#include <algorithm>
#include <type_traits>

#include "bfpn/kernels.hpp"
#include "bfpn/tensor.hpp"

// Differentiable tensor ops. Forward results are deterministic: fixed
// reduction orders, no fast-math, and kernels whose SIMD variants are
// bit-equal to the scalar reference.

namespace bfpn {
namespace detail {

inline void check(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

template <typename T>
T* ensure_grad(const std::shared_ptr<TensorData<T>>& d) {
  if (d->grad.empty()) d->grad.assign(d->value.size(), T(0));
  return d->grad.data();
}

template <typename T>
void k_conv2d_forward(const T* in, const T* w, const T* b, T* out,
                      const kernels::Conv2dDims& d) {
  if constexpr (std::is_same_v<T, float>)
    kernels::active().conv2d_forward(in, w, b, out, d);
  else
    kernels::conv2d_forward<T>(in, w, b, out, d);
}

template <typename T>
void k_conv2d_backward_input(const T* g, const T* w, T* gin,
                             const kernels::Conv2dDims& d) {
  if constexpr (std::is_same_v<T, float>)
    kernels::active().conv2d_backward_input(g, w, gin, d);
  else
    kernels::conv2d_backward_input<T>(g, w, gin, d);
}

template <typename T>
void k_conv2d_backward_weight(const T* in, const T* g, T* gw,
                              const kernels::Conv2dDims& d) {
  if constexpr (std::is_same_v<T, float>)
    kernels::active().conv2d_backward_weight(in, g, gw, d);
  else
    kernels::conv2d_backward_weight<T>(in, g, gw, d);
}

template <typename T>
void k_add(const T* a, const T* b, T* o, size_t n) {
  if constexpr (std::is_same_v<T, float>)
    kernels::active().add(a, b, o, n);
  else
    kernels::add<T>(a, b, o, n);
}

template <typename T>
void k_mul(const T* a, const T* b, T* o, size_t n) {
  if constexpr (std::is_same_v<T, float>)
    kernels::active().mul(a, b, o, n);
  else
    kernels::mul<T>(a, b, o, n);
}

template <typename T>
void k_mul_acc(const T* a, const T* b, T* o, size_t n) {
  if constexpr (std::is_same_v<T, float>)
    kernels::active().mul_acc(a, b, o, n);
  else
    kernels::mul_acc<T>(a, b, o, n);
}

template <typename T>
void k_relu(const T* x, T* o, size_t n) {
  if constexpr (std::is_same_v<T, float>)
    kernels::active().relu(x, o, n);
  else
    kernels::relu<T>(x, o, n);
}

template <typename T>
void k_relu_backward(const T* g, const T* x, T* gin, size_t n) {
  if constexpr (std::is_same_v<T, float>)
    kernels::active().relu_backward(g, x, gin, n);
  else
    kernels::relu_backward<T>(g, x, gin, n);
}

template <typename T>
void k_scale(const T* x, T s, T* o, size_t n) {
  if constexpr (std::is_same_v<T, float>)
    kernels::active().scale(x, s, o, n);
  else
    kernels::scale<T>(x, s, o, n);
}

template <typename T>
void k_axpy(T a, const T* x, T* y, size_t n) {
  if constexpr (std::is_same_v<T, float>)
    kernels::active().axpy(a, x, y, n);
  else
    kernels::axpy<T>(a, x, y, n);
}

// Zero-pad [N,C,H,W] -> [N,C,H+2p,W+2p].
template <typename T>
std::vector<T> pad_nchw(const T* in, int n, int c, int h, int w, int pad) {
  const int hp = h + 2 * pad, wp = w + 2 * pad;
  std::vector<T> out(size_t(n) * c * hp * wp, T(0));
  for (int64_t plane = 0; plane < int64_t(n) * c; ++plane) {
    const T* src = in + plane * h * w;
    T* dst = out.data() + plane * hp * wp + int64_t(pad) * wp + pad;
    for (int y = 0; y < h; ++y) std::copy_n(src + int64_t(y) * w, w, dst + int64_t(y) * wp);
  }
  return out;
}

}  // namespace detail

// --- convolution --------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel,
                 const Tensor<T>& bias, int stride, int padding) {
  detail::check(input.ndim() == 4, "conv2d: input must be [N,C,H,W]");
  detail::check(kernel.ndim() == 4, "conv2d: kernel must be [Co,Ci,kh,kw]");
  detail::check(bias.ndim() == 1, "conv2d: bias must be [Co]");
  detail::check(stride >= 1, "conv2d: stride must be positive");
  detail::check(padding >= 0, "conv2d: padding must be non-negative");
  const int n = input.dim(0), cin = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  const int cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  detail::check(kernel.dim(1) == cin, "conv2d: channel mismatch");
  detail::check(bias.dim(0) == cout, "conv2d: bias length mismatch");
  const int hnum = h + 2 * padding - kh, wnum = w + 2 * padding - kw;
  detail::check(hnum >= 0 && wnum >= 0, "conv2d: kernel larger than input");
  detail::check(hnum % stride == 0 && wnum % stride == 0,
                "conv2d: non-integral output extent");
  const int hout = hnum / stride + 1, wout = wnum / stride + 1;

  kernels::Conv2dDims d{n,  cin, h + 2 * padding, w + 2 * padding, cout,
                        kh, kw,  stride,          hout,            wout};

  auto padded = std::make_shared<std::vector<T>>(
      detail::pad_nchw(input.data(), n, cin, h, w, padding));
  Tensor<T> out({n, cout, hout, wout});
  detail::k_conv2d_forward(padded->data(), kernel.data(), bias.data(),
                           out.data(), d);

  if (recording<T>({&input, &kernel, &bias})) {
    out.set_requires_grad(true);
    auto xd = input.ptr(), wd = kernel.ptr(), bd = bias.ptr(), od = out.ptr();
    int pad = padding;
    Tape<T>::get().record([xd, wd, bd, od, padded, d, pad, h, w]() {
      if (od->grad.empty()) return;
      const T* g = od->grad.data();
      if (xd->requires_grad) {
        std::vector<T> gin_pad(padded->size(), T(0));
        detail::k_conv2d_backward_input(g, wd->value.data(), gin_pad.data(), d);
        T* gx = detail::ensure_grad(xd);
        for (int64_t plane = 0; plane < int64_t(d.n) * d.cin; ++plane) {
          const T* src = gin_pad.data() + plane * d.hp * d.wp +
                         int64_t(pad) * d.wp + pad;
          T* dst = gx + plane * h * w;
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
              dst[int64_t(y) * w + x] += src[int64_t(y) * d.wp + x];
        }
      }
      if (wd->requires_grad)
        detail::k_conv2d_backward_weight(padded->data(), g,
                                         detail::ensure_grad(wd), d);
      if (bd->requires_grad) {
        T* gb = detail::ensure_grad(bd);
        for (int nn = 0; nn < d.n; ++nn)
          for (int co = 0; co < d.cout; ++co) {
            const T* gp = g + ((int64_t(nn) * d.cout + co) * d.hout) * d.wout;
            T acc = T(0);
            for (int64_t i = 0; i < int64_t(d.hout) * d.wout; ++i) acc += gp[i];
            gb[co] += acc;
          }
      }
    });
  }
  return out;
}

// --- upsampling -----------------------------------------------------------

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& input, int factor) {
  detail::check(input.ndim() == 4, "upsample_nearest: input must be 4-d");
  detail::check(factor >= 1, "upsample_nearest: factor must be >= 1");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  const int ho = h * factor, wo = w * factor;
  Tensor<T> out({n, c, ho, wo});
  const T* src = input.data();
  T* dst = out.data();
  for (int64_t plane = 0; plane < int64_t(n) * c; ++plane) {
    const T* sp = src + plane * h * w;
    T* dp = dst + plane * ho * wo;
    for (int y = 0; y < ho; ++y) {
      const T* srow = sp + int64_t(y / factor) * w;
      T* drow = dp + int64_t(y) * wo;
      for (int x = 0; x < wo; ++x) drow[x] = srow[x / factor];
    }
  }
  if (recording<T>({&input})) {
    out.set_requires_grad(true);
    auto xd = input.ptr(), od = out.ptr();
    Tape<T>::get().record([xd, od, n, c, h, w, factor]() {
      if (od->grad.empty() || !xd->requires_grad) return;
      const int ho = h * factor, wo = w * factor;
      const T* g = od->grad.data();
      T* gx = detail::ensure_grad(xd);
      for (int64_t plane = 0; plane < int64_t(n) * c; ++plane) {
        const T* gp = g + plane * ho * wo;
        T* gxp = gx + plane * h * w;
        for (int y = 0; y < ho; ++y)
          for (int x = 0; x < wo; ++x)
            gxp[int64_t(y / factor) * w + x / factor] +=
                gp[int64_t(y) * wo + x];
      }
    });
  }
  return out;
}

namespace detail {
// Half-pixel-center source tap: src = (dst + 0.5)/factor - 0.5, clamped.
struct BilinearTap {
  int i0, i1;
  double w0, w1;
};
inline BilinearTap bilinear_tap(int dst, int factor, int extent) {
  double src = (dst + 0.5) / factor - 0.5;
  if (src <= 0.0) return {0, 0, 1.0, 0.0};
  if (src >= extent - 1) return {extent - 1, extent - 1, 1.0, 0.0};
  int i0 = static_cast<int>(src);
  double w1 = src - i0;
  return {i0, i0 + 1, 1.0 - w1, w1};
}
}  // namespace detail

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& input, int factor) {
  detail::check(input.ndim() == 4, "upsample_bilinear: input must be 4-d");
  detail::check(factor >= 1, "upsample_bilinear: factor must be >= 1");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  const int ho = h * factor, wo = w * factor;
  auto ytaps = std::make_shared<std::vector<detail::BilinearTap>>(ho);
  auto xtaps = std::make_shared<std::vector<detail::BilinearTap>>(wo);
  for (int y = 0; y < ho; ++y) (*ytaps)[y] = detail::bilinear_tap(y, factor, h);
  for (int x = 0; x < wo; ++x) (*xtaps)[x] = detail::bilinear_tap(x, factor, w);

  Tensor<T> out({n, c, ho, wo});
  const T* src = input.data();
  T* dst = out.data();
  for (int64_t plane = 0; plane < int64_t(n) * c; ++plane) {
    const T* sp = src + plane * h * w;
    T* dp = dst + plane * ho * wo;
    for (int y = 0; y < ho; ++y) {
      const auto& ty = (*ytaps)[y];
      const T* r0 = sp + int64_t(ty.i0) * w;
      const T* r1 = sp + int64_t(ty.i1) * w;
      T* drow = dp + int64_t(y) * wo;
      for (int x = 0; x < wo; ++x) {
        const auto& tx = (*xtaps)[x];
        double top = ty.w0 * (tx.w0 * double(r0[tx.i0]) + tx.w1 * double(r0[tx.i1]));
        double bot = ty.w1 * (tx.w0 * double(r1[tx.i0]) + tx.w1 * double(r1[tx.i1]));
        drow[x] = static_cast<T>(top + bot);
      }
    }
  }
  if (recording<T>({&input})) {
    out.set_requires_grad(true);
    auto xd = input.ptr(), od = out.ptr();
    Tape<T>::get().record([xd, od, ytaps, xtaps, n, c, h, w, ho, wo]() {
      if (od->grad.empty() || !xd->requires_grad) return;
      const T* g = od->grad.data();
      T* gx = detail::ensure_grad(xd);
      for (int64_t plane = 0; plane < int64_t(n) * c; ++plane) {
        const T* gp = g + plane * ho * wo;
        T* gxp = gx + plane * h * w;
        for (int y = 0; y < ho; ++y) {
          const auto& ty = (*ytaps)[y];
          for (int x = 0; x < wo; ++x) {
            const auto& tx = (*xtaps)[x];
            double gv = double(gp[int64_t(y) * wo + x]);
            gxp[int64_t(ty.i0) * w + tx.i0] += static_cast<T>(ty.w0 * tx.w0 * gv);
            gxp[int64_t(ty.i0) * w + tx.i1] += static_cast<T>(ty.w0 * tx.w1 * gv);
            gxp[int64_t(ty.i1) * w + tx.i0] += static_cast<T>(ty.w1 * tx.w0 * gv);
            gxp[int64_t(ty.i1) * w + tx.i1] += static_cast<T>(ty.w1 * tx.w1 * gv);
          }
        }
      }
    });
  }
  return out;
}

// --- elementwise ----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check(a.same_shape(b), "add: shape mismatch");
  Tensor<T> out(a.shape());
  detail::k_add(a.data(), b.data(), out.data(), a.numel());
  if (recording<T>({&a, &b})) {
    out.set_requires_grad(true);
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    Tape<T>::get().record([ad, bd, od]() {
      if (od->grad.empty()) return;
      const T* g = od->grad.data();
      size_t n = od->value.size();
      if (ad->requires_grad) detail::k_axpy(T(1), g, detail::ensure_grad(ad), n);
      if (bd->requires_grad) detail::k_axpy(T(1), g, detail::ensure_grad(bd), n);
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check(a.same_shape(b), "mul: shape mismatch");
  Tensor<T> out(a.shape());
  detail::k_mul(a.data(), b.data(), out.data(), a.numel());
  if (recording<T>({&a, &b})) {
    out.set_requires_grad(true);
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    Tape<T>::get().record([ad, bd, od]() {
      if (od->grad.empty()) return;
      const T* g = od->grad.data();
      size_t n = od->value.size();
      if (ad->requires_grad)
        detail::k_mul_acc(g, bd->value.data(), detail::ensure_grad(ad), n);
      if (bd->requires_grad)
        detail::k_mul_acc(g, ad->value.data(), detail::ensure_grad(bd), n);
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  detail::k_relu(x.data(), out.data(), x.numel());
  if (recording<T>({&x})) {
    out.set_requires_grad(true);
    auto xd = x.ptr(), od = out.ptr();
    Tape<T>::get().record([xd, od]() {
      if (od->grad.empty() || !xd->requires_grad) return;
      detail::k_relu_backward(od->grad.data(), xd->value.data(),
                              detail::ensure_grad(xd), od->value.size());
    });
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* xp = x.data();
  T* op = out.data();
  for (size_t i = 0; i < x.numel(); ++i)
    op[i] = T(1) / (T(1) + std::exp(-xp[i]));
  if (recording<T>({&x})) {
    out.set_requires_grad(true);
    auto xd = x.ptr(), od = out.ptr();
    Tape<T>::get().record([xd, od]() {
      if (od->grad.empty() || !xd->requires_grad) return;
      const T* g = od->grad.data();
      const T* y = od->value.data();
      T* gx = detail::ensure_grad(xd);
      for (size_t i = 0; i < od->value.size(); ++i)
        gx[i] += g[i] * y[i] * (T(1) - y[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  const T* xp = x.data();
  for (size_t i = 0; i < x.numel(); ++i)
    if (!(xp[i] > T(0)))
      throw std::domain_error("log: input must be strictly positive");
  Tensor<T> out(x.shape());
  T* op = out.data();
  for (size_t i = 0; i < x.numel(); ++i) op[i] = std::log(xp[i]);
  if (recording<T>({&x})) {
    out.set_requires_grad(true);
    auto xd = x.ptr(), od = out.ptr();
    Tape<T>::get().record([xd, od]() {
      if (od->grad.empty() || !xd->requires_grad) return;
      const T* g = od->grad.data();
      const T* xv = xd->value.data();
      T* gx = detail::ensure_grad(xd);
      for (size_t i = 0; i < od->value.size(); ++i) gx[i] += g[i] / xv[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  detail::k_scale(x.data(), T(-1), out.data(), x.numel());
  if (recording<T>({&x})) {
    out.set_requires_grad(true);
    auto xd = x.ptr(), od = out.ptr();
    Tape<T>::get().record([xd, od]() {
      if (od->grad.empty() || !xd->requires_grad) return;
      detail::k_axpy(T(-1), od->grad.data(), detail::ensure_grad(xd),
                     od->value.size());
    });
  }
  return out;
}

template <typename T>
Tensor<T> scalar_mul(const Tensor<T>& x, T s) {
  Tensor<T> out(x.shape());
  detail::k_scale(x.data(), s, out.data(), x.numel());
  if (recording<T>({&x})) {
    out.set_requires_grad(true);
    auto xd = x.ptr(), od = out.ptr();
    Tape<T>::get().record([xd, od, s]() {
      if (od->grad.empty() || !xd->requires_grad) return;
      detail::k_axpy(s, od->grad.data(), detail::ensure_grad(xd),
                     od->value.size());
    });
  }
  return out;
}

// --- reductions -------------------------------------------------------------

enum class ReduceKind { Sum, Mean };

template <typename T>
Tensor<T> reduce(const Tensor<T>& x, ReduceKind kind, std::vector<int> axes) {
  const int nd = x.ndim();
  std::sort(axes.begin(), axes.end());
  for (size_t i = 0; i < axes.size(); ++i) {
    detail::check(axes[i] >= 0 && axes[i] < nd, "reduce: invalid axis");
    detail::check(i == 0 || axes[i] != axes[i - 1], "reduce: duplicate axis");
  }

  // Empty axis list: identity copy (still differentiable).
  if (axes.empty()) {
    Tensor<T> out(x.shape());
    std::copy_n(x.data(), x.numel(), out.data());
    if (recording<T>({&x})) {
      out.set_requires_grad(true);
      auto xd = x.ptr(), od = out.ptr();
      Tape<T>::get().record([xd, od]() {
        if (od->grad.empty() || !xd->requires_grad) return;
        detail::k_axpy(T(1), od->grad.data(), detail::ensure_grad(xd),
                       od->value.size());
      });
    }
    return out;
  }

  std::vector<bool> reduced(nd, false);
  for (int a : axes) reduced[a] = true;
  std::vector<int> out_shape;
  size_t count = 1;
  for (int i = 0; i < nd; ++i) {
    if (reduced[i])
      count *= static_cast<size_t>(x.dim(i));
    else
      out_shape.push_back(x.dim(i));
  }

  // Row-major strides of the output, aligned to kept input axes.
  std::vector<int64_t> out_stride(nd, 0);
  {
    int64_t s = 1;
    for (int i = nd - 1; i >= 0; --i) {
      if (!reduced[i]) {
        out_stride[i] = s;
        s *= x.dim(i);
      }
    }
  }
  std::vector<int64_t> in_stride(nd, 1);
  for (int i = nd - 2; i >= 0; --i)
    in_stride[i] = in_stride[i + 1] * x.dim(i + 1);

  auto out_index = [nd, dims = x.shape(), in_stride,
                    out_stride](int64_t flat) {
    int64_t o = 0;
    for (int i = 0; i < nd; ++i) {
      int64_t coord = (flat / in_stride[i]) % dims[i];
      o += coord * out_stride[i];
    }
    return o;
  };

  Tensor<T> out(out_shape);
  T* op = out.data();
  const T* xp = x.data();
  for (int64_t i = 0; i < static_cast<int64_t>(x.numel()); ++i)
    op[out_index(i)] += xp[i];
  if (kind == ReduceKind::Mean)
    for (size_t i = 0; i < out.numel(); ++i) op[i] = op[i] / static_cast<T>(count);

  if (recording<T>({&x})) {
    out.set_requires_grad(true);
    auto xd = x.ptr(), od = out.ptr();
    Tape<T>::get().record([xd, od, out_index, kind, count]() {
      if (od->grad.empty() || !xd->requires_grad) return;
      const T* g = od->grad.data();
      T* gx = detail::ensure_grad(xd);
      const T inv = T(1) / static_cast<T>(count);
      for (int64_t i = 0; i < static_cast<int64_t>(xd->value.size()); ++i) {
        T gv = g[out_index(i)];
        gx[i] += kind == ReduceKind::Mean ? gv * inv : gv;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x, std::vector<int> axes) {
  return reduce(x, ReduceKind::Sum, std::move(axes));
}

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& x, std::vector<int> axes) {
  return reduce(x, ReduceKind::Mean, std::move(axes));
}

template <typename T>
Tensor<T> reduce_all_sum(const Tensor<T>& x) {
  std::vector<int> axes(x.ndim());
  for (int i = 0; i < x.ndim(); ++i) axes[i] = i;
  return reduce(x, ReduceKind::Sum, std::move(axes));
}

// --- structural -------------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
  detail::check(!xs.empty(), "concat_channels: empty input list");
  const int n = xs[0].dim(0), h = xs[0].dim(2), w = xs[0].dim(3);
  int ctotal = 0;
  for (const auto& x : xs) {
    detail::check(x.ndim() == 4, "concat_channels: inputs must be 4-d");
    detail::check(x.dim(0) == n && x.dim(2) == h && x.dim(3) == w,
                  "concat_channels: shape mismatch");
    ctotal += x.dim(1);
  }
  Tensor<T> out({n, ctotal, h, w});
  const int64_t hw = int64_t(h) * w;
  for (int nn = 0; nn < n; ++nn) {
    int coff = 0;
    for (const auto& x : xs) {
      const int c = x.dim(1);
      std::copy_n(x.data() + int64_t(nn) * c * hw, int64_t(c) * hw,
                  out.data() + (int64_t(nn) * ctotal + coff) * hw);
      coff += c;
    }
  }
  bool rec = grad_enabled_flag();
  if (rec) {
    rec = false;
    for (const auto& x : xs) rec = rec || x.requires_grad();
  }
  if (rec) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorData<T>>> parts;
    for (const auto& x : xs) parts.push_back(x.ptr());
    auto od = out.ptr();
    Tape<T>::get().record([parts, od, n, ctotal, hw]() {
      if (od->grad.empty()) return;
      const T* g = od->grad.data();
      for (int nn = 0; nn < n; ++nn) {
        int coff = 0;
        for (const auto& p : parts) {
          const int c = static_cast<int>(p->shape[1]);
          if (p->requires_grad) {
            T* gx = detail::ensure_grad(p) + int64_t(nn) * c * hw;
            const T* gs = g + (int64_t(nn) * ctotal + coff) * hw;
            detail::k_axpy(T(1), gs, gx, size_t(c) * hw);
          }
          coff += c;
        }
      }
    });
  }
  return out;
}

// Channel slice [N,C,H,W] -> [N,count,H,W] starting at c0.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int c0, int count) {
  detail::check(x.ndim() == 4, "slice_channels: input must be 4-d");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  detail::check(c0 >= 0 && count >= 1 && c0 + count <= c,
                "slice_channels: range out of bounds");
  Tensor<T> out({n, count, h, w});
  const int64_t hw = int64_t(h) * w;
  for (int nn = 0; nn < n; ++nn)
    std::copy_n(x.data() + (int64_t(nn) * c + c0) * hw, int64_t(count) * hw,
                out.data() + int64_t(nn) * count * hw);
  if (recording<T>({&x})) {
    out.set_requires_grad(true);
    auto xd = x.ptr(), od = out.ptr();
    Tape<T>::get().record([xd, od, n, c, c0, count, hw]() {
      if (od->grad.empty() || !xd->requires_grad) return;
      const T* g = od->grad.data();
      T* gx = detail::ensure_grad(xd);
      for (int nn = 0; nn < n; ++nn)
        detail::k_axpy(T(1), g + int64_t(nn) * count * hw,
                       gx + (int64_t(nn) * c + c0) * hw, size_t(count) * hw);
    });
  }
  return out;
}

}  // namespace bfpn
