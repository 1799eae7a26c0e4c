#pragma once

#include <vector>

#include "bfpn/model.hpp"

namespace bfpn {

// T per-class probability maps from T stochastic forward passes.
struct McSampleStack {
  int T = 0, H = 0, W = 0;
  uint64_t seed = 0;
  std::vector<uint64_t> counters;  // RNG counter of each pass (0..T-1)
  std::vector<float> samples;      // T * 2 * H * W

  const float* sample(int t) const {
    return samples.data() + size_t(t) * 2 * H * W;
  }
  float at(int t, int c, int64_t px) const {
    return samples[(size_t(t) * 2 + c) * H * W + px];
  }
};

// Per-pixel uncertainty maps, natural log. entropy is the predictive entropy
// of the MC-mean probability (aleatoric proxy); mutual_info the mutual
// information between prediction and weight posterior (epistemic proxy).
struct UncertaintyReport {
  int H = 0, W = 0;
  std::vector<double> mean;         // 2*H*W
  std::vector<double> entropy;      // 2*H*W
  std::vector<double> mutual_info;  // 2*H*W
  std::vector<double> entropy_sum;  // H*W, heart + lungs
  std::vector<double> mi_sum;       // H*W
};

McSampleStack mc_sample(BayesianFpn<float>& model, const Tensor<float>& image,
                        int T, uint64_t seed);

std::vector<double> mean_mask(const McSampleStack& stack);
std::vector<double> predictive_entropy(const McSampleStack& stack);
std::vector<double> mutual_information(const McSampleStack& stack);
UncertaintyReport report(const McSampleStack& stack);

// Sort-then-compensate summation: exactly permutation invariant.
double sorted_kahan_sum(std::vector<double>& scratch);
double binary_entropy(double p);  // 0*ln(0) == 0

}  // namespace bfpn
