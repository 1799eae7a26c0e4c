#pragma once

#include <string>

#include "bfpn/ops.hpp"
#include "bfpn/rng.hpp"

namespace bfpn {

// Dropout is stochastic in Train and McInference, identity in Eval.
// Batch norm uses batch statistics in Train, running statistics otherwise.
enum class LayerMode { Train, Eval, McInference };

enum class NormType { Batch, Group, Instance };

struct NormKind {
  NormType type = NormType::Instance;
  int groups = 1;  // Group only
  double eps = 1e-5;
};

// Named collection of the network's tensors. Learnable entries take part in
// optimization; buffers (running stats) are checkpointed but not optimized.
template <typename T>
struct ParamStore {
  struct Entry {
    std::string name;
    Tensor<T> tensor;
    bool learnable;
  };
  std::vector<Entry> entries;

  Tensor<T> add(const std::string& name, std::vector<int> shape,
                bool learnable) {
    for (const auto& e : entries)
      if (e.name == name)
        throw std::invalid_argument("duplicate parameter name: " + name);
    Tensor<T> t(std::move(shape), learnable);
    entries.push_back({name, t, learnable});
    return t;
  }

  Tensor<T>* find(const std::string& name) {
    for (auto& e : entries)
      if (e.name == name) return &e.tensor;
    return nullptr;
  }

  size_t learnable_count() const {
    size_t n = 0;
    for (const auto& e : entries)
      if (e.learnable) n += e.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries) e.tensor.zero_grad();
  }
};

namespace detail {

// Shared normalize-over-contiguous-groups core used by instance and group
// norm. Statistics use population variance accumulated in double.
template <typename T>
Tensor<T> contiguous_group_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                                const Tensor<T>& beta, int groups,
                                double eps) {
  check(x.ndim() == 4, "norm: input must be [N,C,H,W]");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  check(gamma.ndim() == 1 && gamma.dim(0) == c, "norm: gamma must be [C]");
  check(beta.ndim() == 1 && beta.dim(0) == c, "norm: beta must be [C]");
  check(groups >= 1 && c % groups == 0, "norm: groups must divide channels");
  check(eps > 0, "norm: epsilon must be positive");
  const int cg = c / groups;              // channels per group
  const int64_t m = int64_t(cg) * h * w;  // elements per group
  const int64_t hw = int64_t(h) * w;
  const int64_t ngroups = int64_t(n) * groups;

  Tensor<T> out(x.shape());
  auto mean = std::make_shared<std::vector<double>>(ngroups);
  auto istd = std::make_shared<std::vector<double>>(ngroups);

  const T* xp = x.data();
  T* op = out.data();
  const T* gm = gamma.data();
  const T* bt = beta.data();
  for (int64_t gidx = 0; gidx < ngroups; ++gidx) {
    const T* gx = xp + gidx * m;
    double sum = 0.0;
    for (int64_t i = 0; i < m; ++i) sum += double(gx[i]);
    const double mu = sum / double(m);
    double var = 0.0;
    for (int64_t i = 0; i < m; ++i) {
      double d = double(gx[i]) - mu;
      var += d * d;
    }
    var /= double(m);
    const double is = 1.0 / std::sqrt(var + eps);
    (*mean)[gidx] = mu;
    (*istd)[gidx] = is;
    const int c0 = static_cast<int>(gidx % groups) * cg;
    T* go = op + gidx * m;
    for (int cc = 0; cc < cg; ++cc) {
      const double ga = double(gm[c0 + cc]);
      const double be = double(bt[c0 + cc]);
      for (int64_t i = 0; i < hw; ++i) {
        double xh = (double(gx[cc * hw + i]) - mu) * is;
        go[cc * hw + i] = static_cast<T>(ga * xh + be);
      }
    }
  }

  if (recording<T>({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    auto xd = x.ptr(), gd = gamma.ptr(), bd = beta.ptr(), od = out.ptr();
    Tape<T>::get().record([xd, gd, bd, od, mean, istd, groups, cg, hw, m,
                           ngroups]() {
      if (od->grad.empty()) return;
      const T* g = od->grad.data();
      const T* xv = xd->value.data();
      const T* gm = gd->value.data();
      T* gx = xd->requires_grad ? ensure_grad(xd) : nullptr;
      T* gga = gd->requires_grad ? ensure_grad(gd) : nullptr;
      T* gbe = bd->requires_grad ? ensure_grad(bd) : nullptr;
      for (int64_t gidx = 0; gidx < ngroups; ++gidx) {
        const double mu = (*mean)[gidx];
        const double is = (*istd)[gidx];
        const int c0 = static_cast<int>(gidx % groups) * cg;
        const T* xg = xv + gidx * m;
        const T* gg = g + gidx * m;
        // per-channel affine grads
        if (gga || gbe) {
          for (int cc = 0; cc < cg; ++cc) {
            double sg = 0.0, sgx = 0.0;
            for (int64_t i = 0; i < hw; ++i) {
              double gv = double(gg[cc * hw + i]);
              sg += gv;
              sgx += gv * ((double(xg[cc * hw + i]) - mu) * is);
            }
            if (gga) gga[c0 + cc] += static_cast<T>(sgx);
            if (gbe) gbe[c0 + cc] += static_cast<T>(sg);
          }
        }
        if (gx) {
          // d/dx of gamma*(x-mu)*istd + beta over the whole group
          double sum_gxh = 0.0, sum_gxh_xh = 0.0;
          for (int cc = 0; cc < cg; ++cc) {
            const double ga = double(gm[c0 + cc]);
            for (int64_t i = 0; i < hw; ++i) {
              double gxh = double(gg[cc * hw + i]) * ga;
              double xh = (double(xg[cc * hw + i]) - mu) * is;
              sum_gxh += gxh;
              sum_gxh_xh += gxh * xh;
            }
          }
          T* gxg = gx + gidx * m;
          for (int cc = 0; cc < cg; ++cc) {
            const double ga = double(gm[c0 + cc]);
            for (int64_t i = 0; i < hw; ++i) {
              double gxh = double(gg[cc * hw + i]) * ga;
              double xh = (double(xg[cc * hw + i]) - mu) * is;
              double dx =
                  is * (gxh - sum_gxh / double(m) - xh * sum_gxh_xh / double(m));
              gxg[cc * hw + i] += static_cast<T>(dx);
            }
          }
        }
      }
    });
  }
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                        const Tensor<T>& beta, double eps = 1e-5) {
  return detail::contiguous_group_norm(x, gamma, beta, x.dim(1), eps);
}

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, int groups, double eps = 1e-5) {
  return detail::contiguous_group_norm(x, gamma, beta, groups, eps);
}

// Batch norm. Train mode normalizes with batch statistics over (N,H,W) per
// channel and updates running stats (population variance, momentum blend);
// Eval/McInference normalize with the running statistics.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, Tensor<T>& running_mean,
                     Tensor<T>& running_var, LayerMode mode, double eps = 1e-5,
                     double momentum = 0.1) {
  detail::check(x.ndim() == 4, "batch_norm: input must be [N,C,H,W]");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  detail::check(gamma.dim(0) == c && beta.dim(0) == c,
                "batch_norm: affine length mismatch");
  detail::check(running_mean.dim(0) == c && running_var.dim(0) == c,
                "batch_norm: running stats length mismatch");
  const int64_t hw = int64_t(h) * w;
  const int64_t chw = int64_t(c) * hw;

  Tensor<T> out(x.shape());
  const T* xp = x.data();
  T* op = out.data();
  const T* gm = gamma.data();
  const T* bt = beta.data();

  if (mode == LayerMode::Train) {
    detail::check(n >= 2, "batch_norm: Train mode requires batch size >= 2");
    const int64_t m = int64_t(n) * hw;
    auto mean = std::make_shared<std::vector<double>>(c);
    auto istd = std::make_shared<std::vector<double>>(c);
    for (int cc = 0; cc < c; ++cc) {
      double sum = 0.0;
      for (int nn = 0; nn < n; ++nn) {
        const T* row = xp + nn * chw + cc * hw;
        for (int64_t i = 0; i < hw; ++i) sum += double(row[i]);
      }
      const double mu = sum / double(m);
      double var = 0.0;
      for (int nn = 0; nn < n; ++nn) {
        const T* row = xp + nn * chw + cc * hw;
        for (int64_t i = 0; i < hw; ++i) {
          double d = double(row[i]) - mu;
          var += d * d;
        }
      }
      var /= double(m);
      (*mean)[cc] = mu;
      (*istd)[cc] = 1.0 / std::sqrt(var + eps);
      running_mean.data()[cc] = static_cast<T>(
          (1.0 - momentum) * double(running_mean.data()[cc]) + momentum * mu);
      running_var.data()[cc] = static_cast<T>(
          (1.0 - momentum) * double(running_var.data()[cc]) + momentum * var);
      const double ga = double(gm[cc]), be = double(bt[cc]);
      for (int nn = 0; nn < n; ++nn) {
        const T* row = xp + nn * chw + cc * hw;
        T* orow = op + nn * chw + cc * hw;
        for (int64_t i = 0; i < hw; ++i)
          orow[i] =
              static_cast<T>(ga * ((double(row[i]) - mu) * (*istd)[cc]) + be);
      }
    }
    if (recording<T>({&x, &gamma, &beta})) {
      out.set_requires_grad(true);
      auto xd = x.ptr(), gd = gamma.ptr(), bd = beta.ptr(), od = out.ptr();
      Tape<T>::get().record([xd, gd, bd, od, mean, istd, n, c, hw, chw]() {
        if (od->grad.empty()) return;
        const int64_t m = int64_t(n) * hw;
        const T* g = od->grad.data();
        const T* xv = xd->value.data();
        const T* gm = gd->value.data();
        T* gx = xd->requires_grad ? detail::ensure_grad(xd) : nullptr;
        T* gga = gd->requires_grad ? detail::ensure_grad(gd) : nullptr;
        T* gbe = bd->requires_grad ? detail::ensure_grad(bd) : nullptr;
        for (int cc = 0; cc < c; ++cc) {
          const double mu = (*mean)[cc], is = (*istd)[cc];
          const double ga = double(gm[cc]);
          double sg = 0.0, sgxh = 0.0;
          for (int nn = 0; nn < n; ++nn) {
            const T* grow = g + nn * chw + cc * hw;
            const T* xrow = xv + nn * chw + cc * hw;
            for (int64_t i = 0; i < hw; ++i) {
              double gv = double(grow[i]);
              double xh = (double(xrow[i]) - mu) * is;
              sg += gv;
              sgxh += gv * xh;
            }
          }
          if (gga) gga[cc] += static_cast<T>(sgxh);
          if (gbe) gbe[cc] += static_cast<T>(sg);
          if (gx) {
            for (int nn = 0; nn < n; ++nn) {
              const T* grow = g + nn * chw + cc * hw;
              const T* xrow = xv + nn * chw + cc * hw;
              T* gxrow = gx + nn * chw + cc * hw;
              for (int64_t i = 0; i < hw; ++i) {
                double gv = double(grow[i]) * ga;
                double xh = (double(xrow[i]) - mu) * is;
                double dx = is * (gv - ga * sg / double(m) -
                                  xh * ga * sgxh / double(m));
                gxrow[i] += static_cast<T>(dx);
              }
            }
          }
        }
      });
    }
    return out;
  }

  // Eval / McInference: running statistics, per-element affine map.
  auto scale = std::make_shared<std::vector<double>>(c);
  auto shift = std::make_shared<std::vector<double>>(c);
  for (int cc = 0; cc < c; ++cc) {
    double is = 1.0 / std::sqrt(double(running_var.data()[cc]) + eps);
    (*scale)[cc] = double(gm[cc]) * is;
    (*shift)[cc] = double(bt[cc]) -
                   double(gm[cc]) * double(running_mean.data()[cc]) * is;
  }
  for (int nn = 0; nn < n; ++nn)
    for (int cc = 0; cc < c; ++cc) {
      const T* row = xp + nn * chw + cc * hw;
      T* orow = op + nn * chw + cc * hw;
      for (int64_t i = 0; i < hw; ++i)
        orow[i] = static_cast<T>((*scale)[cc] * double(row[i]) + (*shift)[cc]);
    }
  if (recording<T>({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    auto xd = x.ptr(), gd = gamma.ptr(), bd = beta.ptr(), od = out.ptr();
    auto rm = running_mean.ptr(), rv = running_var.ptr();
    double e = eps;
    Tape<T>::get().record([xd, gd, bd, od, rm, rv, scale, n, c, hw, chw, e]() {
      if (od->grad.empty()) return;
      const T* g = od->grad.data();
      const T* xv = xd->value.data();
      T* gx = xd->requires_grad ? detail::ensure_grad(xd) : nullptr;
      T* gga = gd->requires_grad ? detail::ensure_grad(gd) : nullptr;
      T* gbe = bd->requires_grad ? detail::ensure_grad(bd) : nullptr;
      for (int cc = 0; cc < c; ++cc) {
        const double is = 1.0 / std::sqrt(double(rv->value[cc]) + e);
        const double mu = double(rm->value[cc]);
        double sg = 0.0, sgxh = 0.0;
        for (int nn = 0; nn < n; ++nn) {
          const T* grow = g + nn * chw + cc * hw;
          const T* xrow = xv + nn * chw + cc * hw;
          for (int64_t i = 0; i < hw; ++i) {
            double gv = double(grow[i]);
            sg += gv;
            sgxh += gv * ((double(xrow[i]) - mu) * is);
          }
        }
        if (gga) gga[cc] += static_cast<T>(sgxh);
        if (gbe) gbe[cc] += static_cast<T>(sg);
        if (gx) {
          for (int nn = 0; nn < n; ++nn) {
            const T* grow = g + nn * chw + cc * hw;
            T* gxrow = gx + nn * chw + cc * hw;
            for (int64_t i = 0; i < hw; ++i)
              gxrow[i] += static_cast<T>(double(grow[i]) * (*scale)[cc]);
          }
        }
      }
    });
  }
  return out;
}

// Inverted dropout: survivors scaled by 1/(1-p) so Eval mode is the identity.
// Masks are a pure function of (seed, counter, layer id, element), so a pass
// is reproducible regardless of thread schedule.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, LayerMode mode,
                  const RngStream& rs, uint64_t layer_id) {
  detail::check(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
  if (mode == LayerMode::Eval || p == 0.0) return x;
  const uint64_t key = rng::key3(rs.seed, rs.counter, layer_id);
  auto mask = std::make_shared<std::vector<T>>(x.numel());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (size_t i = 0; i < x.numel(); ++i)
    (*mask)[i] = rng::u01(rng::key2(key, i)) >= p ? keep_scale : T(0);
  Tensor<T> out(x.shape());
  detail::k_mul(x.data(), mask->data(), out.data(), x.numel());
  if (recording<T>({&x})) {
    out.set_requires_grad(true);
    auto xd = x.ptr(), od = out.ptr();
    Tape<T>::get().record([xd, od, mask]() {
      if (od->grad.empty() || !xd->requires_grad) return;
      detail::k_mul_acc(od->grad.data(), mask->data(),
                        detail::ensure_grad(xd), od->value.size());
    });
  }
  return out;
}

// Spatial dropout: one Bernoulli draw per (sample, channel).
template <typename T>
Tensor<T> spatial_dropout(const Tensor<T>& x, double p, LayerMode mode,
                          const RngStream& rs, uint64_t layer_id) {
  detail::check(p >= 0.0 && p < 1.0, "spatial_dropout: p must be in [0,1)");
  detail::check(x.ndim() == 4, "spatial_dropout: input must be [N,C,H,W]");
  if (mode == LayerMode::Eval || p == 0.0) return x;
  const int n = x.dim(0), c = x.dim(1);
  const int64_t hw = int64_t(x.dim(2)) * x.dim(3);
  const uint64_t key = rng::key3(rs.seed, rs.counter, layer_id);
  auto mask = std::make_shared<std::vector<T>>(x.numel());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (int64_t ch = 0; ch < int64_t(n) * c; ++ch) {
    T v = rng::u01(rng::key2(key, uint64_t(ch))) >= p ? keep_scale : T(0);
    std::fill_n(mask->data() + ch * hw, hw, v);
  }
  Tensor<T> out(x.shape());
  detail::k_mul(x.data(), mask->data(), out.data(), x.numel());
  if (recording<T>({&x})) {
    out.set_requires_grad(true);
    auto xd = x.ptr(), od = out.ptr();
    Tape<T>::get().record([xd, od, mask]() {
      if (od->grad.empty() || !xd->requires_grad) return;
      detail::k_mul_acc(od->grad.data(), mask->data(),
                        detail::ensure_grad(xd), od->value.size());
    });
  }
  return out;
}

// --- layer wrappers ---------------------------------------------------------

template <typename T>
struct Conv2dLayer {
  Tensor<T> w, b;
  int stride = 1;
  int pad = 0;
  Tensor<T> operator()(const Tensor<T>& x) const {
    return conv2d(x, w, b, stride, pad);
  }
};

template <typename T>
struct NormLayer {
  NormKind kind;
  Tensor<T> gamma, beta;
  Tensor<T> running_mean, running_var;  // Batch only
  double momentum = 0.1;

  Tensor<T> operator()(const Tensor<T>& x, LayerMode mode) {
    switch (kind.type) {
      case NormType::Instance:
        return instance_norm(x, gamma, beta, kind.eps);
      case NormType::Group:
        return group_norm(x, gamma, beta, kind.groups, kind.eps);
      case NormType::Batch:
        return batch_norm(x, gamma, beta, running_mean, running_var, mode,
                          kind.eps, momentum);
    }
    throw std::logic_error("unreachable");
  }
};

template <typename T>
struct DropoutLayer {
  double p = 0.0;
  uint64_t layer_id = 0;
  bool spatial = false;
  Tensor<T> operator()(const Tensor<T>& x, LayerMode mode,
                       const RngStream& rs) const {
    return spatial ? spatial_dropout(x, p, mode, rs, layer_id)
                   : dropout(x, p, mode, rs, layer_id);
  }
};

// conv-norm-relu x2 with an optional projection shortcut:
// out = relu(norm2(conv2(relu(norm1(conv1(x))))) + shortcut(x))
template <typename T>
struct ResidualBlock {
  Conv2dLayer<T> conv1, conv2;
  NormLayer<T> norm1, norm2;
  bool has_proj = false;
  Conv2dLayer<T> proj;
  NormLayer<T> proj_norm;

  Tensor<T> operator()(const Tensor<T>& x, LayerMode mode) {
    Tensor<T> y = relu(norm1(conv1(x), mode));
    y = norm2(conv2(y), mode);
    Tensor<T> sc = has_proj ? proj_norm(proj(x), mode) : x;
    return relu(add(y, sc));
  }
};

}  // namespace bfpn
