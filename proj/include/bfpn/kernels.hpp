#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>

#include "bfpn/util.hpp"

// Inner-loop kernels. Scalar reference implementations are templated and
// define the exact accumulation order; the AVX2 float variants reproduce that
// order lane-for-lane, so scalar and SIMD paths agree bit-for-bit (the whole
// project is compiled with -ffp-contract=off to keep mul+add un-fused).
// Reductions are lane-partitioned: elements are folded into 8 partial
// accumulators round-robin (zero-padded final chunk) and combined with a
// fixed pairwise tree.

namespace bfpn::kernels {

// Convolution geometry. Input is already zero-padded: hp/wp are the padded
// spatial extents, so kernels never bounds-check.
struct Conv2dDims {
  int n;
  int cin;
  int hp, wp;
  int cout;
  int kh, kw;
  int stride;
  int hout, wout;
};

struct AdamStep {
  float beta1, beta2, eps, lr;
  float rc1, rc2;  // 1/(1-beta1^t), 1/(1-beta2^t)
};

template <typename T>
inline T reduce8(const T lane[8]) {
  T s0 = lane[0] + lane[4];
  T s1 = lane[1] + lane[5];
  T s2 = lane[2] + lane[6];
  T s3 = lane[3] + lane[7];
  T t0 = s0 + s2;
  T t1 = s1 + s3;
  return t0 + t1;
}

// out[n,co,oy,ox] = bias[co] + sum_{ci,ky,kx} w[co,ci,ky,kx] * in[n,ci,oy*s+ky,ox*s+kx]
template <typename T>
void conv2d_forward(const T* in, const T* w, const T* bias, T* out,
                    const Conv2dDims& d) {
  const int64_t rows = int64_t(d.n) * d.cout;
  parallel_for(rows, [&](int64_t lo, int64_t hi) {
    for (int64_t r = lo; r < hi; ++r) {
      const int nn = static_cast<int>(r / d.cout);
      const int co = static_cast<int>(r % d.cout);
      const T* wbase = w + int64_t(co) * d.cin * d.kh * d.kw;
      for (int oy = 0; oy < d.hout; ++oy) {
        T* orow = out + ((r * d.hout) + oy) * d.wout;
        for (int ox = 0; ox < d.wout; ++ox) {
          T acc = bias[co];
          const T* wk = wbase;
          for (int ci = 0; ci < d.cin; ++ci) {
            const T* iplane =
                in + ((int64_t(nn) * d.cin + ci) * d.hp) * d.wp;
            for (int ky = 0; ky < d.kh; ++ky) {
              const T* irow = iplane + int64_t(oy * d.stride + ky) * d.wp +
                              ox * d.stride;
              for (int kx = 0; kx < d.kw; ++kx)
                acc += wk[ky * d.kw + kx] * irow[kx];
            }
            wk += d.kh * d.kw;
          }
          orow[ox] = acc;
        }
      }
    }
  });
}

// gin[n,ci,oy*s+ky,ox*s+kx] += w[co,ci,ky,kx] * gout[n,co,oy,ox]
// Loop nest (n, ci, co, ky, kx, oy, ox); gin has padded extents.
template <typename T>
void conv2d_backward_input(const T* gout, const T* w, T* gin,
                           const Conv2dDims& d) {
  const int64_t rows = int64_t(d.n) * d.cin;
  parallel_for(rows, [&](int64_t lo, int64_t hi) {
    for (int64_t r = lo; r < hi; ++r) {
      const int nn = static_cast<int>(r / d.cin);
      const int ci = static_cast<int>(r % d.cin);
      T* gplane = gin + (r * d.hp) * d.wp;
      for (int co = 0; co < d.cout; ++co) {
        const T* gobase =
            gout + ((int64_t(nn) * d.cout + co) * d.hout) * d.wout;
        const T* wbase = w + (int64_t(co) * d.cin + ci) * d.kh * d.kw;
        for (int ky = 0; ky < d.kh; ++ky) {
          for (int kx = 0; kx < d.kw; ++kx) {
            const T wv = wbase[ky * d.kw + kx];
            for (int oy = 0; oy < d.hout; ++oy) {
              const T* grow = gobase + int64_t(oy) * d.wout;
              T* grow_in = gplane + int64_t(oy * d.stride + ky) * d.wp + kx;
              for (int ox = 0; ox < d.wout; ++ox)
                grow_in[ox * d.stride] += wv * grow[ox];
            }
          }
        }
      }
    }
  });
}

// gw[co,ci,ky,kx] += sum_{n,oy,ox} in[n,ci,oy*s+ky,ox*s+kx] * gout[n,co,oy,ox]
// using lane-partitioned accumulation (8 lanes, zero-padded final chunk).
template <typename T>
void conv2d_backward_weight(const T* in, const T* gout, T* gw,
                            const Conv2dDims& d) {
  parallel_for(d.cout, [&](int64_t lo, int64_t hi) {
    for (int64_t co = lo; co < hi; ++co) {
      for (int ci = 0; ci < d.cin; ++ci) {
        for (int ky = 0; ky < d.kh; ++ky) {
          for (int kx = 0; kx < d.kw; ++kx) {
            T lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
            for (int nn = 0; nn < d.n; ++nn) {
              const T* iplane =
                  in + ((int64_t(nn) * d.cin + ci) * d.hp) * d.wp;
              const T* gobase =
                  gout + ((int64_t(nn) * d.cout + co) * d.hout) * d.wout;
              for (int oy = 0; oy < d.hout; ++oy) {
                const T* irow =
                    iplane + int64_t(oy * d.stride + ky) * d.wp + kx;
                const T* grow = gobase + int64_t(oy) * d.wout;
                int ox = 0;
                for (; ox + 8 <= d.wout; ox += 8)
                  for (int j = 0; j < 8; ++j)
                    lane[j] += irow[(ox + j) * d.stride] * grow[ox + j];
                if (ox < d.wout) {
                  T tin[8] = {0, 0, 0, 0, 0, 0, 0, 0};
                  T tg[8] = {0, 0, 0, 0, 0, 0, 0, 0};
                  for (int j = 0; ox + j < d.wout; ++j) {
                    tin[j] = irow[(ox + j) * d.stride];
                    tg[j] = grow[ox + j];
                  }
                  for (int j = 0; j < 8; ++j) lane[j] += tin[j] * tg[j];
                }
              }
            }
            gw[((co * d.cin + ci) * d.kh + ky) * d.kw + kx] += reduce8(lane);
          }
        }
      }
    }
  });
}

template <typename T>
void add(const T* a, const T* b, T* o, size_t n) {
  for (size_t i = 0; i < n; ++i) o[i] = a[i] + b[i];
}

template <typename T>
void mul(const T* a, const T* b, T* o, size_t n) {
  for (size_t i = 0; i < n; ++i) o[i] = a[i] * b[i];
}

// o += a * b
template <typename T>
void mul_acc(const T* a, const T* b, T* o, size_t n) {
  for (size_t i = 0; i < n; ++i) o[i] += a[i] * b[i];
}

template <typename T>
void relu(const T* x, T* o, size_t n) {
  for (size_t i = 0; i < n; ++i) o[i] = x[i] > T(0) ? x[i] : T(0);
}

// gin += gout where x > 0 (adds an explicit zero otherwise, matching SIMD)
template <typename T>
void relu_backward(const T* gout, const T* x, T* gin, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    T g = x[i] > T(0) ? gout[i] : T(0);
    gin[i] += g;
  }
}

template <typename T>
void scale(const T* x, T s, T* o, size_t n) {
  for (size_t i = 0; i < n; ++i) o[i] = s * x[i];
}

// y += a * x
template <typename T>
void axpy(T a, const T* x, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void adam_step(T* p, T* m, T* v, const T* g, size_t n, const AdamStep& hp) {
  const T b1 = hp.beta1, b2 = hp.beta2;
  const T omb1 = T(1) - hp.beta1, omb2 = T(1) - hp.beta2;
  const T rc1 = hp.rc1, rc2 = hp.rc2, eps = hp.eps, lr = hp.lr;
  for (size_t i = 0; i < n; ++i) {
    T t0 = b1 * m[i];
    T t1 = omb1 * g[i];
    m[i] = t0 + t1;
    T gg = g[i] * g[i];
    T t2 = b2 * v[i];
    T t3 = omb2 * gg;
    v[i] = t2 + t3;
    T mh = m[i] * rc1;
    T vh = v[i] * rc2;
    T den = std::sqrt(vh) + eps;
    T upd = (lr * mh) / den;
    p[i] = p[i] - upd;
  }
}

// Runtime-dispatched float kernel table.
struct KernelOps {
  const char* name;
  void (*conv2d_forward)(const float*, const float*, const float*, float*,
                         const Conv2dDims&);
  void (*conv2d_backward_input)(const float*, const float*, float*,
                                const Conv2dDims&);
  void (*conv2d_backward_weight)(const float*, const float*, float*,
                                 const Conv2dDims&);
  void (*add)(const float*, const float*, float*, size_t);
  void (*mul)(const float*, const float*, float*, size_t);
  void (*mul_acc)(const float*, const float*, float*, size_t);
  void (*relu)(const float*, float*, size_t);
  void (*relu_backward)(const float*, const float*, float*, size_t);
  void (*scale)(const float*, float, float*, size_t);
  void (*axpy)(float, const float*, float*, size_t);
  void (*adam_step)(float*, float*, float*, const float*, size_t,
                    const AdamStep&);
};

const KernelOps& scalar_table();
const KernelOps& avx2_table();  // valid only if avx2_supported()
bool avx2_supported();

// Selected once per process: AVX2 when available, overridable with
// BFPN_KERNEL=scalar|avx2.
const KernelOps& active();

}  // namespace bfpn::kernels
