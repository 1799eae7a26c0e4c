#pragma once

#include <functional>
#include <vector>

#include "bfpn/ops.hpp"
#include "bfpn/rng.hpp"

namespace testutil {

template <typename T>
bfpn::Tensor<T> random_tensor(std::vector<int> shape, uint64_t key, double lo,
                              double hi, bool requires_grad = false) {
  bfpn::Tensor<T> t(std::move(shape), requires_grad);
  for (size_t i = 0; i < t.numel(); ++i)
    t.data()[i] = static_cast<T>(bfpn::rng::uniform(bfpn::rng::key2(key, i), lo, hi));
  return t;
}

// Central finite differences against analytic grads. `loss_fn` must rebuild
// the graph from the leaves on every call. Relative error uses a floor that
// absorbs FD noise on near-zero gradients.
template <typename T>
double max_fd_rel_error(const std::function<bfpn::Tensor<T>()>& loss_fn,
                        std::vector<bfpn::Tensor<T>> leaves, double h = 1e-5,
                        size_t max_entries_per_leaf = 0, double floor = 1e-6) {
  for (auto& leaf : leaves) leaf.zero_grad();
  bfpn::Tensor<T> loss = loss_fn();
  bfpn::backward(loss);

  std::vector<std::vector<T>> analytic;
  for (auto& leaf : leaves) {
    leaf.grad();  // ensure allocated
    analytic.push_back(leaf.grad_vec());
  }

  double worst = 0.0;
  bfpn::NoGradGuard ng;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = leaves[li];
    const size_t n = leaf.numel();
    size_t count = max_entries_per_leaf == 0
                       ? n
                       : std::min(max_entries_per_leaf, n);
    for (size_t k = 0; k < count; ++k) {
      // spread sampled entries deterministically across the tensor
      size_t i = count == n
                     ? k
                     : bfpn::rng::uniform_int(
                           bfpn::rng::key3(0xfd5eedull, li, k), n);
      T saved = leaf.data()[i];
      leaf.data()[i] = saved + static_cast<T>(h);
      double lp = double(loss_fn().item());
      leaf.data()[i] = saved - static_cast<T>(h);
      double lm = double(loss_fn().item());
      leaf.data()[i] = saved;
      double fd = (lp - lm) / (2.0 * h);
      double a = double(analytic[li][i]);
      double rel = std::abs(a - fd) /
                   std::max({std::abs(a), std::abs(fd), floor});
      if (rel > worst) worst = rel;
    }
  }
  return worst;
}

}  // namespace testutil
