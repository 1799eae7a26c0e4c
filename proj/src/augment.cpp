#include <algorithm>
#include <cmath>

#include "bfpn/train.hpp"

namespace bfpn {
namespace {

struct Draws {
  uint64_t key;
  uint64_t n = 0;
  double uniform(double lo, double hi) {
    return rng::uniform(rng::key2(key, n++), lo, hi);
  }
  bool gate(double p) { return uniform(0.0, 1.0) < p; }
};

enum class Border { Clamp, Zero };

float sample_bilinear(const std::vector<float>& img, int S, double x, double y,
                      Border border) {
  int x0 = int(std::floor(x)), y0 = int(std::floor(y));
  double fx = x - x0, fy = y - y0;
  auto tap = [&](int yy, int xx) -> double {
    if (border == Border::Clamp) {
      xx = std::clamp(xx, 0, S - 1);
      yy = std::clamp(yy, 0, S - 1);
    } else if (xx < 0 || xx >= S || yy < 0 || yy >= S) {
      return 0.0;
    }
    return double(img[size_t(yy) * S + xx]);
  };
  double top = (1 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1);
  double bot = (1 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1);
  return float((1 - fy) * top + fy * bot);
}

// Resample every plane through the same dst->src map so image and masks
// never desynchronize.
template <typename MapFn>
void warp_planes(PhantomSample& s, MapFn&& map, Border border) {
  const int S = s.size;
  std::vector<float> img(s.image.size());
  std::vector<float> hm(s.image.size()), lm(s.image.size());
  std::vector<float> hsrc(s.heart_mask.begin(), s.heart_mask.end());
  std::vector<float> lsrc(s.lungs_mask.begin(), s.lungs_mask.end());
  for (int r = 0; r < S; ++r)
    for (int c = 0; c < S; ++c) {
      double sx, sy;
      map(c, r, sx, sy);
      const size_t i = size_t(r) * S + c;
      img[i] = sample_bilinear(s.image, S, sx, sy, border);
      hm[i] = sample_bilinear(hsrc, S, sx, sy, border);
      lm[i] = sample_bilinear(lsrc, S, sx, sy, border);
    }
  s.image = std::move(img);
  for (size_t i = 0; i < hm.size(); ++i) {
    s.heart_mask[i] = hm[i] >= 0.5f ? 1 : 0;
    s.lungs_mask[i] = lm[i] >= 0.5f ? 1 : 0;
  }
}

void blur3x3_inplace(std::vector<float>& img, int S) {
  static const float k[3] = {0.25f, 0.5f, 0.25f};
  std::vector<float> tmp(img.size());
  auto cl = [S](int v) { return std::clamp(v, 0, S - 1); };
  for (int r = 0; r < S; ++r)
    for (int c = 0; c < S; ++c) {
      float acc = 0;
      for (int j = -1; j <= 1; ++j) acc += k[j + 1] * img[size_t(r) * S + cl(c + j)];
      tmp[size_t(r) * S + c] = acc;
    }
  for (int r = 0; r < S; ++r)
    for (int c = 0; c < S; ++c) {
      float acc = 0;
      for (int j = -1; j <= 1; ++j) acc += k[j + 1] * tmp[size_t(cl(r + j)) * S + c];
      img[size_t(r) * S + c] = acc;
    }
}

}  // namespace

PhantomSample augment(const PhantomSample& sample, const AugmentationSpec& spec,
                      uint64_t key) {
  PhantomSample s = sample;
  if (!spec.enabled) return s;
  const int S = s.size;
  Draws d{key};

  if (d.gate(spec.crop_p)) {
    double area = d.uniform(spec.crop_scale_lo, spec.crop_scale_hi);
    int side = std::clamp(int(std::lround(S * std::sqrt(area))), 4, S);
    int maxoff = S - side;
    int x0 = int(std::lround(d.uniform(0.0, double(maxoff))));
    int y0 = int(std::lround(d.uniform(0.0, double(maxoff))));
    double scale = double(side) / double(S);
    warp_planes(
        s,
        [&](int c, int r, double& sx, double& sy) {
          sx = x0 + (c + 0.5) * scale - 0.5;
          sy = y0 + (r + 0.5) * scale - 0.5;
        },
        Border::Clamp);
  }

  if (d.gate(spec.rotate_p)) {
    double theta = d.uniform(-spec.rotate_deg, spec.rotate_deg) * M_PI / 180.0;
    double ct = std::cos(theta), st = std::sin(theta);
    double cx = (S - 1) / 2.0, cy = (S - 1) / 2.0;
    warp_planes(
        s,
        [&](int c, int r, double& sx, double& sy) {
          double dx = c - cx, dy = r - cy;
          sx = cx + ct * dx + st * dy;  // inverse rotation
          sy = cy - st * dx + ct * dy;
        },
        Border::Zero);
  }

  if (d.gate(spec.noise_p)) {
    const uint64_t nkey = rng::key2(key, 0xadd401ull);
    for (size_t i = 0; i < s.image.size(); ++i)
      s.image[i] += float(spec.noise_sigma * rng::normal(rng::key2(nkey, i)));
  }
  if (d.gate(spec.blur_p)) blur3x3_inplace(s.image, S);
  if (d.gate(spec.sharpen_p)) {
    std::vector<float> blurred = s.image;
    blur3x3_inplace(blurred, S);
    for (size_t i = 0; i < s.image.size(); ++i)
      s.image[i] += float(spec.sharpen_amount) * (s.image[i] - blurred[i]);
  }
  if (d.gate(spec.brightness_p)) {
    float delta = float(d.uniform(-spec.brightness_delta, spec.brightness_delta));
    for (float& v : s.image) v += delta;
  }
  if (d.gate(spec.hflip_p)) {
    for (int r = 0; r < S; ++r)
      for (int c = 0; c < S / 2; ++c) {
        const size_t a = size_t(r) * S + c, b = size_t(r) * S + (S - 1 - c);
        std::swap(s.image[a], s.image[b]);
        std::swap(s.heart_mask[a], s.heart_mask[b]);
        std::swap(s.lungs_mask[a], s.lungs_mask[b]);
      }
  }
  for (float& v : s.image) v = std::clamp(v, 0.0f, 1.0f);
  return s;
}

}  // namespace bfpn
