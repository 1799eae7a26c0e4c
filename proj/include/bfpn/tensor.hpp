#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace bfpn {

template <typename T>
struct TensorData {
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
};

inline size_t shape_numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int e : shape) {
    if (e <= 0) throw std::invalid_argument("tensor extent must be positive");
    n *= static_cast<size_t>(e);
  }
  return n;
}

// Dense row-major tensor handle with an optional gradient slot. Copies are
// shallow; ops never alias outputs with inputs.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, bool requires_grad = false)
      : d_(std::make_shared<TensorData<T>>()) {
    size_t n = shape_numel(shape);
    d_->shape = std::move(shape);
    d_->value.assign(n, T(0));
    d_->requires_grad = requires_grad;
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, T v) {
    Tensor t(std::move(shape));
    std::fill(t.d_->value.begin(), t.d_->value.end(), v);
    return t;
  }

  static Tensor from_data(std::vector<int> shape, std::vector<T> data,
                          bool requires_grad = false) {
    if (shape_numel(shape) != data.size())
      throw std::invalid_argument("tensor data length does not match shape");
    Tensor t;
    t.d_ = std::make_shared<TensorData<T>>();
    t.d_->shape = std::move(shape);
    t.d_->value = std::move(data);
    t.d_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from_data({}, {v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(d_); }
  const std::vector<int>& shape() const { return d_->shape; }
  int ndim() const { return static_cast<int>(d_->shape.size()); }
  int dim(int i) const { return d_->shape[static_cast<size_t>(i)]; }
  size_t numel() const { return d_->value.size(); }

  T* data() { return d_->value.data(); }
  const T* data() const { return d_->value.data(); }
  std::vector<T>& vec() { return d_->value; }
  const std::vector<T>& vec() const { return d_->value; }

  T item() const {
    if (numel() != 1)
      throw std::invalid_argument("item() requires a single-element tensor");
    return d_->value[0];
  }

  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    d_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return !d_->grad.empty(); }
  // Grad accumulator, zero-initialized on first touch.
  T* grad() {
    if (d_->grad.empty()) d_->grad.assign(d_->value.size(), T(0));
    return d_->grad.data();
  }
  const std::vector<T>& grad_vec() const { return d_->grad; }
  void zero_grad() {
    if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), T(0));
  }

  std::shared_ptr<TensorData<T>> ptr() const { return d_; }

  bool same_shape(const Tensor& o) const { return d_->shape == o.d_->shape; }

 private:
  std::shared_ptr<TensorData<T>> d_;
};

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (const T& v : t.vec())
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

// --- reverse-mode tape -------------------------------------------------

inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_enabled_flag()) { grad_enabled_flag() = false; }
  ~NoGradGuard() { grad_enabled_flag() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Ordered record of executed differentiable ops. One tape per thread and
// element type; backward replays it in exact reverse execution order.
template <typename T>
class Tape {
 public:
  static Tape& get() {
    thread_local Tape tape;
    return tape;
  }

  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }
  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  void run_reverse() {
    for (size_t i = nodes_.size(); i-- > 0;) nodes_[i]();
    clear();
  }

 private:
  std::vector<std::function<void()>> nodes_;
};

template <typename T>
bool recording(std::initializer_list<const Tensor<T>*> inputs) {
  if (!grad_enabled_flag()) return false;
  for (const Tensor<T>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

// Populates grads of every requires_grad tensor reachable from `loss`,
// then clears the graph.
template <typename T>
void backward(Tensor<T> loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward() requires a scalar loss");
  if (Tape<T>::get().size() == 0)
    throw std::invalid_argument("backward() on an empty graph");
  loss.grad()[0] = T(1);
  Tape<T>::get().run_reverse();
}

}  // namespace bfpn
