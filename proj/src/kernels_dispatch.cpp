#include <cstdlib>
#include <cstring>

#include "bfpn/kernels.hpp"

namespace bfpn::kernels {

const KernelOps& scalar_table() {
  static const KernelOps t = {
      "scalar",
      conv2d_forward<float>,
      conv2d_backward_input<float>,
      conv2d_backward_weight<float>,
      add<float>,
      mul<float>,
      mul_acc<float>,
      relu<float>,
      relu_backward<float>,
      scale<float>,
      axpy<float>,
      adam_step<float>,
  };
  return t;
}

bool avx2_supported() {
#if defined(__GNUC__) && (defined(__x86_64__) || defined(__i386__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelOps& active() {
  static const KernelOps& selected = []() -> const KernelOps& {
    const char* want = std::getenv("BFPN_KERNEL");
    if (want && std::strcmp(want, "scalar") == 0) return scalar_table();
    if (want && std::strcmp(want, "avx2") == 0) {
      if (!avx2_supported())
        throw UsageError("BFPN_KERNEL=avx2 requested but CPU lacks AVX2");
      return avx2_table();
    }
    return avx2_supported() ? avx2_table() : scalar_table();
  }();
  return selected;
}

}  // namespace bfpn::kernels
