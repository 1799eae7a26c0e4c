#pragma once

#include <cstdint>
#include <vector>

#include "bfpn/rng.hpp"
#include "bfpn/util.hpp"

namespace bfpn {

// Analytic geometry behind one phantom: two elliptical lung lobes and one
// heart ellipse straddling the midline. Column spans are planned on the
// integer pixel grid and ellipse extents are chosen so rasterization realizes
// them exactly.
struct PhantomParams {
  int lung_c0 = 0, lung_c1 = 0;    // planned lung column span
  int heart_c0 = 0, heart_c1 = 0;  // planned heart column span
  double left_cx = 0, left_cy = 0, left_ax = 0, left_ay = 0;
  double right_cx = 0, right_cy = 0, right_ax = 0, right_ay = 0;
  double heart_cx = 0, heart_cy = 0, heart_ax = 0, heart_ay = 0;
  double background = 0, lung_value = 0, heart_value = 0;
  double shade_v = 0, shade_h = 0;
  double noise_sigma = 0;
  uint64_t sample_seed = 0;
};

struct PhantomSample {
  int id = 0;
  int size = 0;
  std::vector<float> image;         // size*size, values in [0,1]
  std::vector<uint8_t> heart_mask;  // size*size, {0,1}
  std::vector<uint8_t> lungs_mask;
  double gt_ctr = 0;  // recomputed from the rasterized masks
  PhantomParams params;
};

struct PhantomConfig {
  int count = 200;
  int size = 64;
  double ctr_lo = 0.35, ctr_hi = 0.65;
  double lung_extent_lo = 0.70, lung_extent_hi = 0.90;  // fraction of width
  double noise_lo = 0.01, noise_hi = 0.10;
  bool blur = false;
  double background = 0.45, lung_value = 0.18, heart_value = 0.75;
  uint64_t seed = 0;

  void validate() const {
    if (count < 1) throw UsageError("phantom: count must be >= 1");
    if (size < 16) throw UsageError("phantom: size must be >= 16");
    if (!(ctr_lo <= ctr_hi) || ctr_lo <= 0 || ctr_hi >= 1)
      throw UsageError("phantom: ctr range must satisfy 0 < lo <= hi < 1");
    if (!(lung_extent_lo <= lung_extent_hi) || lung_extent_lo <= 0 ||
        lung_extent_hi >= 1)
      throw UsageError("phantom: lung extent range invalid");
    if (!(noise_lo <= noise_hi) || noise_lo < 0)
      throw UsageError("phantom: noise range invalid");
    if (ctr_lo * lung_extent_lo * size < 3.0)
      throw UsageError("phantom: geometry infeasible (heart below 3 px)");
  }
};

PhantomSample generate_one(const PhantomConfig& config, int index);
std::vector<PhantomSample> generate(const PhantomConfig& config);

struct SplitResult {
  std::vector<PhantomSample> train, val, test;
};

SplitResult split(std::vector<PhantomSample> samples,
                  double train_frac = 0.7, double val_frac = 0.1,
                  double test_frac = 0.2, uint64_t seed = 0);

}  // namespace bfpn
