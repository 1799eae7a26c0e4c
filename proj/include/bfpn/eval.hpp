#pragma once

#include <string>
#include <vector>

#include "bfpn/ctr.hpp"

namespace bfpn {

double iou(const uint8_t* pred, const uint8_t* gt, size_t n);
double dice(const uint8_t* pred, const uint8_t* gt, size_t n);

// Throws NumericError when either sequence has zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Percentile bootstrap interval of the mean; deterministic given seed.
std::pair<double, double> bootstrap_ci(const std::vector<double>& values,
                                       int resamples = 2000,
                                       double level = 0.95, uint64_t seed = 0);

struct MetricRow {
  std::string image_id;
  double iou_heart = 0, iou_lungs = 0;
  double dice_heart = 0, dice_lungs = 0;
  double ctr_pred = 0;  // NaN when every MC sample was flagged
  double ctr_gt = 0;
  int flagged_samples = 0;
};

// MC inference at the given T over a sample set: threshold the MC-mean mask
// at 0.5, score IoU/Dice per class, and estimate CTR from the sample stack.
std::vector<MetricRow> evaluate(BayesianFpn<float>& model,
                                const std::vector<PhantomSample>& samples,
                                int T, uint64_t seed);

struct SweepRow {
  int T = 0;
  std::string metric;  // iou_heart | iou_lungs | pearson_ctr
  double value = 0;
  double ci_low = 0, ci_high = 0;
};

std::vector<SweepRow> mc_sweep(BayesianFpn<float>& model,
                               const std::vector<PhantomSample>& samples,
                               const std::vector<int>& t_list, uint64_t seed);

}  // namespace bfpn
