#pragma once

#include "bfpn/nn.hpp"

namespace bfpn {

template <typename T>
class Adam {
 public:
  Adam(ParamStore<T>& store, double lr = 1e-4, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : store_(&store), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& e : store.entries) {
      if (!e.learnable) continue;
      m_.emplace_back(e.tensor.numel(), T(0));
      v_.emplace_back(e.tensor.numel(), T(0));
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    kernels::AdamStep hp{float(beta1_), float(beta2_), float(eps_),
                         float(lr_), float(1.0 / bc1), float(1.0 / bc2)};
    size_t k = 0;
    for (auto& e : store_->entries) {
      if (!e.learnable) continue;
      T* g = e.tensor.grad();  // zero-filled if this step never touched it
      if constexpr (std::is_same_v<T, float>)
        kernels::active().adam_step(e.tensor.data(), m_[k].data(),
                                    v_[k].data(), g, e.tensor.numel(), hp);
      else
        kernels::adam_step<T>(e.tensor.data(), m_[k].data(), v_[k].data(), g,
                              e.tensor.numel(), hp);
      ++k;
    }
  }

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  int64_t t() const { return t_; }
  void set_t(int64_t t) { t_ = t; }
  std::vector<std::vector<T>>& m() { return m_; }
  std::vector<std::vector<T>>& v() { return v_; }
  const std::vector<std::vector<T>>& m() const { return m_; }
  const std::vector<std::vector<T>>& v() const { return v_; }

 private:
  ParamStore<T>* store_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace bfpn
