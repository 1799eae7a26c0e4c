#include "bfpn/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "bfpn/ctr.hpp"

namespace bfpn {
namespace {

// Sequential draws from one per-sample stream.
struct Draws {
  uint64_t key;
  uint64_t n = 0;
  double uniform(double lo, double hi) {
    return rng::uniform(rng::key2(key, n++), lo, hi);
  }
  int uniform_int(int lo, int hi) {  // inclusive
    return lo + int(rng::uniform_int(rng::key2(key, n++),
                                     uint64_t(hi - lo + 1)));
  }
};

struct Ellipse {
  double cx, cy, ax, ay;
  bool contains(double x, double y) const {
    double dx = (x - cx) / ax, dy = (y - cy) / ay;
    return dx * dx + dy * dy <= 1.0;
  }
};

// Ellipse whose rasterized column span is exactly [c0, c1]: center on the
// mid-span, horizontal semi-axis snapped just past the extreme pixel
// centers, vertical center on the pixel-center grid so one row passes
// through the widest section.
Ellipse span_ellipse(int c0, int c1, double cy_target, double ay) {
  Ellipse e;
  e.cx = c0 + (double(c1 - c0) + 1.0) / 2.0;
  e.ax = (double(c1 - c0) + 1.0) / 2.0 - 0.01;
  e.cy = std::floor(cy_target) + 0.5;
  e.ay = ay;
  return e;
}

void rasterize(const Ellipse& e, int size, std::vector<uint8_t>& mask) {
  for (int r = 0; r < size; ++r) {
    double y = r + 0.5;
    for (int c = 0; c < size; ++c)
      if (e.contains(c + 0.5, y)) mask[size_t(r) * size + c] = 1;
  }
}

void blur3x3(std::vector<float>& img, int size) {
  static const float k[3] = {0.25f, 0.5f, 0.25f};
  std::vector<float> tmp(img.size());
  auto clampi = [size](int v) { return v < 0 ? 0 : (v >= size ? size - 1 : v); };
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      float acc = 0;
      for (int j = -1; j <= 1; ++j)
        acc += k[j + 1] * img[size_t(r) * size + clampi(c + j)];
      tmp[size_t(r) * size + c] = acc;
    }
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      float acc = 0;
      for (int j = -1; j <= 1; ++j)
        acc += k[j + 1] * tmp[size_t(clampi(r + j)) * size + c];
      img[size_t(r) * size + c] = acc;
    }
}

}  // namespace

PhantomSample generate_one(const PhantomConfig& config, int index) {
  const int S = config.size;
  PhantomSample s;
  s.id = index;
  s.size = S;
  s.image.assign(size_t(S) * S, 0.0f);
  s.heart_mask.assign(size_t(S) * S, 0);
  s.lungs_mask.assign(size_t(S) * S, 0);

  PhantomParams& P = s.params;
  P.sample_seed = rng::key2(config.seed, uint64_t(index));
  Draws d{P.sample_seed};

  // Planned integer column spans. Lungs first, then the heart strictly
  // inside with at least one pixel margin per side.
  const int lung_w =
      int(std::lround(S * d.uniform(config.lung_extent_lo,
                                    config.lung_extent_hi)));
  int lung_c0 = (S - lung_w) / 2 + d.uniform_int(-S / 32, S / 32);
  lung_c0 = std::max(1, std::min(lung_c0, S - 2 - lung_w + 1));
  const int lung_c1 = lung_c0 + lung_w - 1;

  const double ctr_target = d.uniform(config.ctr_lo, config.ctr_hi);
  int heart_w = int(std::lround(ctr_target * lung_w));
  heart_w = std::max(3, std::min(heart_w, lung_w - 2));
  if (heart_w < 3) throw UsageError("phantom: geometry infeasible");
  int heart_c0 = lung_c0 + (lung_w - heart_w) / 2 +
                 d.uniform_int(-S / 32, S / 32);
  heart_c0 = std::max(lung_c0 + 1, std::min(heart_c0, lung_c1 - heart_w));
  const int heart_c1 = heart_c0 + heart_w - 1;

  P.lung_c0 = lung_c0;
  P.lung_c1 = lung_c1;
  P.heart_c0 = heart_c0;
  P.heart_c1 = heart_c1;

  // Lobes cover the outer ~48% of the lung span each, leaving a mediastinal
  // gap the heart straddles (so the heart overlaps both inner lobe edges).
  const int lobe_w = std::max(3, int(std::lround(0.48 * lung_w)));
  Ellipse left = span_ellipse(lung_c0, lung_c0 + lobe_w - 1,
                              d.uniform(0.44, 0.54) * S,
                              d.uniform(0.26, 0.36) * S);
  Ellipse right = span_ellipse(lung_c1 - lobe_w + 1, lung_c1,
                               d.uniform(0.44, 0.54) * S,
                               d.uniform(0.26, 0.36) * S);
  double heart_ay = std::min(d.uniform(0.35, 0.55) * heart_w, 0.30 * S);
  heart_ay = std::max(heart_ay, 1.0);
  Ellipse heart = span_ellipse(heart_c0, heart_c1,
                               d.uniform(0.52, 0.62) * S, heart_ay);
  // Keep every ellipse row-bounded inside the image.
  auto clamp_rows = [S](Ellipse& e) {
    e.ay = std::min({e.ay, e.cy - 0.5, double(S) - 0.5 - e.cy});
    e.ay = std::max(e.ay, 1.0);
  };
  clamp_rows(left);
  clamp_rows(right);
  clamp_rows(heart);

  P.left_cx = left.cx;
  P.left_cy = left.cy;
  P.left_ax = left.ax;
  P.left_ay = left.ay;
  P.right_cx = right.cx;
  P.right_cy = right.cy;
  P.right_ax = right.ax;
  P.right_ay = right.ay;
  P.heart_cx = heart.cx;
  P.heart_cy = heart.cy;
  P.heart_ax = heart.ax;
  P.heart_ay = heart.ay;

  rasterize(left, S, s.lungs_mask);
  rasterize(right, S, s.lungs_mask);
  rasterize(heart, S, s.heart_mask);

  // Intensity model: soft background gradient, dark lung fields, bright
  // heart drawn over the lung field.
  P.background = config.background + d.uniform(-0.05, 0.05);
  P.lung_value = config.lung_value + d.uniform(-0.03, 0.03);
  P.heart_value = config.heart_value + d.uniform(-0.05, 0.05);
  P.shade_v = d.uniform(0.02, 0.10);
  P.shade_h = d.uniform(-0.04, 0.04);
  P.noise_sigma = d.uniform(config.noise_lo, config.noise_hi);

  for (int r = 0; r < S; ++r) {
    for (int c = 0; c < S; ++c) {
      const size_t i = size_t(r) * S + c;
      double v = P.background + P.shade_v * (double(r) / S - 0.5) +
                 P.shade_h * (double(c) / S - 0.5);
      if (s.lungs_mask[i]) v = P.lung_value;
      if (s.heart_mask[i]) v = P.heart_value;
      s.image[i] = float(v);
    }
  }
  if (config.blur) blur3x3(s.image, S);
  if (P.noise_sigma > 0) {
    const uint64_t nkey = rng::key2(P.sample_seed, 0x4e01ull);
    for (size_t i = 0; i < s.image.size(); ++i)
      s.image[i] += float(P.noise_sigma * rng::normal(rng::key2(nkey, i)));
  }
  for (float& v : s.image) v = std::min(1.0f, std::max(0.0f, v));

  // Ground truth shares the measurement definition with inference.
  s.gt_ctr = measure_ctr(s.heart_mask.data(), s.lungs_mask.data(), S, S).ctr;
  return s;
}

std::vector<PhantomSample> generate(const PhantomConfig& config) {
  config.validate();
  std::vector<PhantomSample> out(size_t(config.count));
  parallel_for(config.count, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i)
      out[size_t(i)] = generate_one(config, int(i));
  });
  return out;
}

SplitResult split(std::vector<PhantomSample> samples, double train_frac,
                  double val_frac, double test_frac, uint64_t seed) {
  if (std::fabs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    throw UsageError("split: fractions must sum to 1");
  const size_t n = samples.size();
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  // seeded Fisher-Yates
  for (size_t i = n; i > 1; --i) {
    size_t j = rng::uniform_int(rng::key3(seed, 0x5317ull, i), i);
    std::swap(idx[i - 1], idx[j]);
  }
  size_t n_train = size_t(std::lround(train_frac * double(n)));
  size_t n_val = size_t(std::lround(val_frac * double(n)));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);
  SplitResult r;
  for (size_t i = 0; i < n; ++i) {
    PhantomSample& s = samples[idx[i]];
    if (i < n_train)
      r.train.push_back(std::move(s));
    else if (i < n_train + n_val)
      r.val.push_back(std::move(s));
    else
      r.test.push_back(std::move(s));
  }
  return r;
}

}  // namespace bfpn
