// AVX2 float kernels. Each variant reproduces the scalar reference
// accumulation order lane-for-lane (see kernels.hpp), so outputs are
// bit-identical to the scalar table. Strides other than 1 take the scalar
// path for the convolution kernels.

#include "bfpn/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

#include <cstring>

namespace bfpn::kernels {
namespace {

void conv2d_forward_avx2(const float* in, const float* w, const float* bias,
                         float* out, const Conv2dDims& d) {
  if (d.stride != 1) {
    scalar_table().conv2d_forward(in, w, bias, out, d);
    return;
  }
  const int64_t rows = int64_t(d.n) * d.cout;
  parallel_for(rows, [&](int64_t lo, int64_t hi) {
    for (int64_t r = lo; r < hi; ++r) {
      const int nn = static_cast<int>(r / d.cout);
      const int co = static_cast<int>(r % d.cout);
      const float* wbase = w + int64_t(co) * d.cin * d.kh * d.kw;
      const float* ibase = in + (int64_t(nn) * d.cin * d.hp) * d.wp;
      for (int oy = 0; oy < d.hout; ++oy) {
        float* orow = out + ((r * d.hout) + oy) * d.wout;
        int ox = 0;
        for (; ox + 8 <= d.wout; ox += 8) {
          __m256 acc = _mm256_set1_ps(bias[co]);
          const float* wk = wbase;
          for (int ci = 0; ci < d.cin; ++ci) {
            const float* iplane = ibase + (int64_t(ci) * d.hp) * d.wp;
            for (int ky = 0; ky < d.kh; ++ky) {
              const float* irow = iplane + int64_t(oy + ky) * d.wp + ox;
              for (int kx = 0; kx < d.kw; ++kx) {
                __m256 wv = _mm256_set1_ps(wk[ky * d.kw + kx]);
                __m256 iv = _mm256_loadu_ps(irow + kx);
                acc = _mm256_add_ps(acc, _mm256_mul_ps(wv, iv));
              }
            }
            wk += d.kh * d.kw;
          }
          _mm256_storeu_ps(orow + ox, acc);
        }
        for (; ox < d.wout; ++ox) {
          float acc = bias[co];
          const float* wk = wbase;
          for (int ci = 0; ci < d.cin; ++ci) {
            const float* iplane = ibase + (int64_t(ci) * d.hp) * d.wp;
            for (int ky = 0; ky < d.kh; ++ky) {
              const float* irow = iplane + int64_t(oy + ky) * d.wp + ox;
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

void conv2d_backward_input_avx2(const float* gout, const float* w, float* gin,
                                const Conv2dDims& d) {
  if (d.stride != 1) {
    scalar_table().conv2d_backward_input(gout, w, gin, d);
    return;
  }
  const int64_t rows = int64_t(d.n) * d.cin;
  parallel_for(rows, [&](int64_t lo, int64_t hi) {
    for (int64_t r = lo; r < hi; ++r) {
      const int nn = static_cast<int>(r / d.cin);
      const int ci = static_cast<int>(r % d.cin);
      float* gplane = gin + (r * d.hp) * d.wp;
      for (int co = 0; co < d.cout; ++co) {
        const float* gobase =
            gout + ((int64_t(nn) * d.cout + co) * d.hout) * d.wout;
        const float* wbase = w + (int64_t(co) * d.cin + ci) * d.kh * d.kw;
        for (int ky = 0; ky < d.kh; ++ky) {
          for (int kx = 0; kx < d.kw; ++kx) {
            const float wv = wbase[ky * d.kw + kx];
            const __m256 wv8 = _mm256_set1_ps(wv);
            for (int oy = 0; oy < d.hout; ++oy) {
              const float* grow = gobase + int64_t(oy) * d.wout;
              float* grow_in = gplane + int64_t(oy + ky) * d.wp + kx;
              int ox = 0;
              for (; ox + 8 <= d.wout; ox += 8) {
                __m256 acc = _mm256_loadu_ps(grow_in + ox);
                __m256 gv = _mm256_loadu_ps(grow + ox);
                acc = _mm256_add_ps(acc, _mm256_mul_ps(wv8, gv));
                _mm256_storeu_ps(grow_in + ox, acc);
              }
              for (; ox < d.wout; ++ox) grow_in[ox] += wv * grow[ox];
            }
          }
        }
      }
    }
  });
}

void conv2d_backward_weight_avx2(const float* in, const float* gout, float* gw,
                                 const Conv2dDims& d) {
  if (d.stride != 1) {
    scalar_table().conv2d_backward_weight(in, gout, gw, d);
    return;
  }
  parallel_for(d.cout, [&](int64_t lo, int64_t hi) {
    for (int64_t co = lo; co < hi; ++co) {
      for (int ci = 0; ci < d.cin; ++ci) {
        for (int ky = 0; ky < d.kh; ++ky) {
          for (int kx = 0; kx < d.kw; ++kx) {
            __m256 acc = _mm256_setzero_ps();
            for (int nn = 0; nn < d.n; ++nn) {
              const float* iplane =
                  in + ((int64_t(nn) * d.cin + ci) * d.hp) * d.wp;
              const float* gobase =
                  gout + ((int64_t(nn) * d.cout + co) * d.hout) * d.wout;
              for (int oy = 0; oy < d.hout; ++oy) {
                const float* irow = iplane + int64_t(oy + ky) * d.wp + kx;
                const float* grow = gobase + int64_t(oy) * d.wout;
                int ox = 0;
                for (; ox + 8 <= d.wout; ox += 8) {
                  __m256 iv = _mm256_loadu_ps(irow + ox);
                  __m256 gv = _mm256_loadu_ps(grow + ox);
                  acc = _mm256_add_ps(acc, _mm256_mul_ps(iv, gv));
                }
                if (ox < d.wout) {
                  float tin[8] = {0, 0, 0, 0, 0, 0, 0, 0};
                  float tg[8] = {0, 0, 0, 0, 0, 0, 0, 0};
                  for (int j = 0; ox + j < d.wout; ++j) {
                    tin[j] = irow[ox + j];
                    tg[j] = grow[ox + j];
                  }
                  __m256 iv = _mm256_loadu_ps(tin);
                  __m256 gv = _mm256_loadu_ps(tg);
                  acc = _mm256_add_ps(acc, _mm256_mul_ps(iv, gv));
                }
              }
            }
            float lane[8];
            _mm256_storeu_ps(lane, acc);
            // same pairwise tree as kernels::reduce8
            float s0 = lane[0] + lane[4];
            float s1 = lane[1] + lane[5];
            float s2 = lane[2] + lane[6];
            float s3 = lane[3] + lane[7];
            float t0 = s0 + s2;
            float t1 = s1 + s3;
            gw[((co * d.cin + ci) * d.kh + ky) * d.kw + kx] += t0 + t1;
          }
        }
      }
    }
  });
}

void add_avx2(const float* a, const float* b, float* o, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(o + i, _mm256_add_ps(_mm256_loadu_ps(a + i),
                                          _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) o[i] = a[i] + b[i];
}

void mul_avx2(const float* a, const float* b, float* o, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(o + i, _mm256_mul_ps(_mm256_loadu_ps(a + i),
                                          _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) o[i] = a[i] * b[i];
}

void mul_acc_avx2(const float* a, const float* b, float* o, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 prod = _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    _mm256_storeu_ps(o + i, _mm256_add_ps(_mm256_loadu_ps(o + i), prod));
  }
  for (; i < n; ++i) o[i] += a[i] * b[i];
}

void relu_avx2(const float* x, float* o, size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(o + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) o[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_avx2(const float* gout, const float* x, float* gin,
                        size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    __m256 g = _mm256_and_ps(mask, _mm256_loadu_ps(gout + i));
    _mm256_storeu_ps(gin + i, _mm256_add_ps(_mm256_loadu_ps(gin + i), g));
  }
  for (; i < n; ++i) {
    float g = x[i] > 0.0f ? gout[i] : 0.0f;
    gin[i] += g;
  }
}

void scale_avx2(const float* x, float s, float* o, size_t n) {
  const __m256 sv = _mm256_set1_ps(s);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(o + i, _mm256_mul_ps(sv, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) o[i] = s * x[i];
}

void axpy_avx2(float a, const float* x, float* y, size_t n) {
  const __m256 av = _mm256_set1_ps(a);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 prod = _mm256_mul_ps(av, _mm256_loadu_ps(x + i));
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void adam_step_avx2(float* p, float* m, float* v, const float* g, size_t n,
                    const AdamStep& hp) {
  const __m256 b1 = _mm256_set1_ps(hp.beta1);
  const __m256 b2 = _mm256_set1_ps(hp.beta2);
  const __m256 omb1 = _mm256_set1_ps(1.0f - hp.beta1);
  const __m256 omb2 = _mm256_set1_ps(1.0f - hp.beta2);
  const __m256 rc1 = _mm256_set1_ps(hp.rc1);
  const __m256 rc2 = _mm256_set1_ps(hp.rc2);
  const __m256 eps = _mm256_set1_ps(hp.eps);
  const __m256 lr = _mm256_set1_ps(hp.lr);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 gv = _mm256_loadu_ps(g + i);
    __m256 t0 = _mm256_mul_ps(b1, _mm256_loadu_ps(m + i));
    __m256 t1 = _mm256_mul_ps(omb1, gv);
    __m256 mv = _mm256_add_ps(t0, t1);
    _mm256_storeu_ps(m + i, mv);
    __m256 gg = _mm256_mul_ps(gv, gv);
    __m256 t2 = _mm256_mul_ps(b2, _mm256_loadu_ps(v + i));
    __m256 t3 = _mm256_mul_ps(omb2, gg);
    __m256 vv = _mm256_add_ps(t2, t3);
    _mm256_storeu_ps(v + i, vv);
    __m256 mh = _mm256_mul_ps(mv, rc1);
    __m256 vh = _mm256_mul_ps(vv, rc2);
    __m256 den = _mm256_add_ps(_mm256_sqrt_ps(vh), eps);
    __m256 upd = _mm256_div_ps(_mm256_mul_ps(lr, mh), den);
    _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), upd));
  }
  if (i < n)
    scalar_table().adam_step(p + i, m + i, v + i, g + i, n - i, hp);
}

}  // namespace

const KernelOps& avx2_table() {
  static const KernelOps t = {
      "avx2",
      conv2d_forward_avx2,
      conv2d_backward_input_avx2,
      conv2d_backward_weight_avx2,
      add_avx2,
      mul_avx2,
      mul_acc_avx2,
      relu_avx2,
      relu_backward_avx2,
      scale_avx2,
      axpy_avx2,
      adam_step_avx2,
  };
  return t;
}

}  // namespace bfpn::kernels

#else  // non-x86: never selected, satisfy the linker

namespace bfpn::kernels {
const KernelOps& avx2_table() { return scalar_table(); }
}  // namespace bfpn::kernels

#endif
