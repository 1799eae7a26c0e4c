#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bfpn/bayes.hpp"
#include "bfpn/phantom.hpp"

namespace bfpn {

// Signals an unusable (empty) segmentation mask; callers treat the sample as
// flagged rather than fatal.
struct EmptyMaskError : std::runtime_error {
  explicit EmptyMaskError(const std::string& which)
      : std::runtime_error("empty mask: " + which), mask(which) {}
  std::string mask;
};

// Widths are horizontal bounding extents (max col - min col + 1), the
// maximal horizontal diameters of the masks.
struct CtrMeasurement {
  int heart_width = 0;  // A + B
  int lung_width = 0;   // C + D
  double ctr = 0;       // heart_width / lung_width
  std::pair<int, int> heart_span{0, 0};  // inclusive column extents
  std::pair<int, int> lung_span{0, 0};
};

CtrMeasurement measure_ctr(const uint8_t* heart_mask,
                           const uint8_t* lungs_mask, int h, int w);

struct CtrEstimate {
  std::vector<CtrMeasurement> per_sample;  // unflagged samples only
  double mean = 0;
  double stddev = 0;  // sample (n-1); 0 when a single sample
  double p2_5 = 0, p97_5 = 0;
  int flagged = 0;
};

CtrEstimate estimate_ctr(const McSampleStack& stack, double threshold = 0.5);

double ground_truth_ctr(const PhantomSample& sample);

// Linear interpolation between order statistics; q in [0,1].
double percentile_linear(const std::vector<double>& sorted_values, double q);

}  // namespace bfpn
