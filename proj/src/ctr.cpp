#include "bfpn/ctr.hpp"

#include <algorithm>
#include <cmath>

namespace bfpn {
namespace {

// Inclusive column extents of the nonzero support; false when empty.
bool column_span(const uint8_t* mask, int h, int w, int& c0, int& c1) {
  c0 = w;
  c1 = -1;
  for (int r = 0; r < h; ++r) {
    const uint8_t* row = mask + size_t(r) * w;
    for (int c = 0; c < w; ++c) {
      if (row[c]) {
        if (c < c0) c0 = c;
        if (c > c1) c1 = c;
      }
    }
  }
  return c1 >= 0;
}

}  // namespace

CtrMeasurement measure_ctr(const uint8_t* heart_mask,
                           const uint8_t* lungs_mask, int h, int w) {
  int hc0, hc1, lc0, lc1;
  if (!column_span(heart_mask, h, w, hc0, hc1)) throw EmptyMaskError("heart");
  if (!column_span(lungs_mask, h, w, lc0, lc1)) throw EmptyMaskError("lungs");
  CtrMeasurement m;
  m.heart_span = {hc0, hc1};
  m.lung_span = {lc0, lc1};
  m.heart_width = hc1 - hc0 + 1;
  m.lung_width = lc1 - lc0 + 1;
  m.ctr = double(m.heart_width) / double(m.lung_width);
  return m;
}

double percentile_linear(const std::vector<double>& sorted_values, double q) {
  const size_t n = sorted_values.size();
  if (n == 0) throw std::invalid_argument("percentile of empty sequence");
  if (n == 1) return sorted_values[0];
  double pos = q * double(n - 1);
  size_t i = size_t(pos);
  if (i >= n - 1) return sorted_values[n - 1];
  double frac = pos - double(i);
  return sorted_values[i] + frac * (sorted_values[i + 1] - sorted_values[i]);
}

CtrEstimate estimate_ctr(const McSampleStack& stack, double threshold) {
  if (stack.T < 1) throw std::invalid_argument("estimate_ctr: empty stack");
  const int64_t npx = int64_t(stack.H) * stack.W;
  CtrEstimate est;
  std::vector<uint8_t> heart(static_cast<size_t>(npx));
  std::vector<uint8_t> lungs(static_cast<size_t>(npx));
  for (int t = 0; t < stack.T; ++t) {
    const float* s = stack.sample(t);
    for (int64_t i = 0; i < npx; ++i) {
      heart[size_t(i)] = s[i] > threshold ? 1 : 0;
      lungs[size_t(i)] = s[npx + i] > threshold ? 1 : 0;
    }
    try {
      est.per_sample.push_back(
          measure_ctr(heart.data(), lungs.data(), stack.H, stack.W));
    } catch (const EmptyMaskError&) {
      ++est.flagged;
    }
  }
  if (est.per_sample.empty())
    throw NumericError("estimate_ctr: every MC sample had an empty mask");

  const size_t n = est.per_sample.size();
  std::vector<double> ctrs(n);
  for (size_t i = 0; i < n; ++i) ctrs[i] = est.per_sample[i].ctr;
  double sum = 0;
  for (double v : ctrs) sum += v;
  est.mean = sum / double(n);
  if (n > 1) {
    double ss = 0;
    for (double v : ctrs) ss += (v - est.mean) * (v - est.mean);
    est.stddev = std::sqrt(ss / double(n - 1));
  }
  std::sort(ctrs.begin(), ctrs.end());
  est.p2_5 = percentile_linear(ctrs, 0.025);
  est.p97_5 = percentile_linear(ctrs, 0.975);
  return est;
}

double ground_truth_ctr(const PhantomSample& sample) {
  return measure_ctr(sample.heart_mask.data(), sample.lungs_mask.data(),
                     sample.size, sample.size)
      .ctr;
}

}  // namespace bfpn
