#include "bfpn/bayes.hpp"

#include <algorithm>
#include <cmath>

namespace bfpn {

double sorted_kahan_sum(std::vector<double>& scratch) {
  std::sort(scratch.begin(), scratch.end());
  double s = 0.0, comp = 0.0;
  for (double x : scratch) {
    double y = x - comp;
    double t = s + y;
    comp = (t - s) - y;
    s = t;
  }
  return s;
}

double binary_entropy(double p) {
  double a = p > 0.0 ? p * std::log(p) : 0.0;
  double b = p < 1.0 ? (1.0 - p) * std::log(1.0 - p) : 0.0;
  return -(a + b);
}

McSampleStack mc_sample(BayesianFpn<float>& model, const Tensor<float>& image,
                        int T, uint64_t seed) {
  if (T < 1) throw std::invalid_argument("mc_sample: T must be >= 1");
  if (image.ndim() != 4 || image.dim(0) != 1 || image.dim(1) != 1)
    throw std::invalid_argument("mc_sample: image must be [1,1,H,W]");
  NoGradGuard ng;
  McSampleStack stack;
  stack.T = T;
  stack.H = image.dim(2);
  stack.W = image.dim(3);
  stack.seed = seed;
  stack.samples.resize(size_t(T) * 2 * stack.H * stack.W);
  stack.counters.resize(size_t(T));
  for (int t = 0; t < T; ++t) {
    stack.counters[size_t(t)] = uint64_t(t);
    Tensor<float> out =
        model.forward(image, LayerMode::McInference, RngStream{seed, uint64_t(t)});
    std::copy_n(out.data(), out.numel(),
                stack.samples.data() + size_t(t) * 2 * stack.H * stack.W);
  }
  return stack;
}

std::vector<double> mean_mask(const McSampleStack& stack) {
  const int64_t npx = int64_t(stack.H) * stack.W;
  std::vector<double> out(size_t(2 * npx));
  std::vector<double> vals(size_t(stack.T));
  for (int c = 0; c < 2; ++c)
    for (int64_t i = 0; i < npx; ++i) {
      for (int t = 0; t < stack.T; ++t)
        vals[size_t(t)] = double(stack.at(t, c, i));
      out[size_t(c * npx + i)] = sorted_kahan_sum(vals) / double(stack.T);
    }
  return out;
}

std::vector<double> predictive_entropy(const McSampleStack& stack) {
  std::vector<double> mean = mean_mask(stack);
  std::vector<double> out(mean.size());
  for (size_t i = 0; i < mean.size(); ++i) out[i] = binary_entropy(mean[i]);
  return out;
}

std::vector<double> mutual_information(const McSampleStack& stack) {
  const int64_t npx = int64_t(stack.H) * stack.W;
  std::vector<double> out(size_t(2 * npx));
  std::vector<double> vals(size_t(stack.T)), ents(size_t(stack.T));
  for (int c = 0; c < 2; ++c)
    for (int64_t i = 0; i < npx; ++i) {
      for (int t = 0; t < stack.T; ++t) {
        double p = double(stack.at(t, c, i));
        vals[size_t(t)] = p;
        ents[size_t(t)] = binary_entropy(p);
      }
      double mean = sorted_kahan_sum(vals) / double(stack.T);
      double mean_ent = sorted_kahan_sum(ents) / double(stack.T);
      out[size_t(c * npx + i)] = binary_entropy(mean) - mean_ent;
    }
  return out;
}

UncertaintyReport report(const McSampleStack& stack) {
  UncertaintyReport r;
  r.H = stack.H;
  r.W = stack.W;
  r.mean = mean_mask(stack);
  r.entropy = predictive_entropy(stack);
  r.mutual_info = mutual_information(stack);
  const size_t npx = size_t(stack.H) * stack.W;
  r.entropy_sum.resize(npx);
  r.mi_sum.resize(npx);
  for (size_t i = 0; i < npx; ++i) {
    r.entropy_sum[i] = r.entropy[i] + r.entropy[npx + i];
    r.mi_sum[i] = r.mutual_info[i] + r.mutual_info[npx + i];
  }
  return r;
}

}  // namespace bfpn
