#include "bfpn/eval.hpp"

#include <algorithm>
#include <cmath>

namespace bfpn {

double iou(const uint8_t* pred, const uint8_t* gt, size_t n) {
  size_t inter = 0, uni = 0;
  for (size_t i = 0; i < n; ++i) {
    bool a = pred[i] != 0, b = gt[i] != 0;
    inter += a && b;
    uni += a || b;
  }
  if (uni == 0) return 1.0;  // both empty
  return double(inter) / double(uni);
}

double dice(const uint8_t* pred, const uint8_t* gt, size_t n) {
  size_t inter = 0, pa = 0, pb = 0;
  for (size_t i = 0; i < n; ++i) {
    bool a = pred[i] != 0, b = gt[i] != 0;
    inter += a && b;
    pa += a;
    pb += b;
  }
  if (pa + pb == 0) return 1.0;
  return 2.0 * double(inter) / double(pa + pb);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("pearson: needs two sequences of equal length >= 2");
  const size_t n = x.size();
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw NumericError("pearson: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

std::pair<double, double> bootstrap_ci(const std::vector<double>& values,
                                       int resamples, double level,
                                       uint64_t seed) {
  if (values.empty())
    throw std::invalid_argument("bootstrap_ci: empty input");
  const size_t n = values.size();
  std::vector<double> means(static_cast<size_t>(resamples));
  for (int b = 0; b < resamples; ++b) {
    double acc = 0;
    const uint64_t bk = rng::key3(seed, 0xb007ull, uint64_t(b));
    for (size_t j = 0; j < n; ++j)
      acc += values[rng::uniform_int(rng::key2(bk, j), n)];
    means[size_t(b)] = acc / double(n);
  }
  std::sort(means.begin(), means.end());
  const double alpha = (1.0 - level) / 2.0;
  return {percentile_linear(means, alpha), percentile_linear(means, 1.0 - alpha)};
}

std::vector<MetricRow> evaluate(BayesianFpn<float>& model,
                                const std::vector<PhantomSample>& samples,
                                int T, uint64_t seed) {
  std::vector<MetricRow> rows;
  rows.reserve(samples.size());
  const int S = model.config().input_size;
  const size_t npx = size_t(S) * S;
  std::vector<uint8_t> heart(npx), lungs(npx);
  for (size_t si = 0; si < samples.size(); ++si) {
    const PhantomSample& s = samples[si];
    Tensor<float> img = Tensor<float>::from_data(
        {1, 1, S, S}, s.image);
    McSampleStack stack =
        mc_sample(model, img, T, rng::key2(seed, uint64_t(si)));
    std::vector<double> mean = mean_mask(stack);
    for (size_t i = 0; i < npx; ++i) {
      heart[i] = mean[i] > 0.5 ? 1 : 0;
      lungs[i] = mean[npx + i] > 0.5 ? 1 : 0;
    }
    MetricRow row;
    row.image_id = "img_" + std::to_string(s.id);
    row.iou_heart = iou(heart.data(), s.heart_mask.data(), npx);
    row.iou_lungs = iou(lungs.data(), s.lungs_mask.data(), npx);
    row.dice_heart = dice(heart.data(), s.heart_mask.data(), npx);
    row.dice_lungs = dice(lungs.data(), s.lungs_mask.data(), npx);
    row.ctr_gt = s.gt_ctr;
    try {
      CtrEstimate est = estimate_ctr(stack);
      row.ctr_pred = est.mean;
      row.flagged_samples = est.flagged;
    } catch (const NumericError&) {
      row.ctr_pred = std::nan("");
      row.flagged_samples = T;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<SweepRow> mc_sweep(BayesianFpn<float>& model,
                               const std::vector<PhantomSample>& samples,
                               const std::vector<int>& t_list, uint64_t seed) {
  if (samples.empty()) throw std::invalid_argument("mc_sweep: empty test set");
  std::vector<SweepRow> out;
  for (int T : t_list) {
    std::vector<MetricRow> rows = evaluate(model, samples, T, seed);
    std::vector<double> iou_h, iou_l, cp, cg;
    for (const auto& r : rows) {
      iou_h.push_back(r.iou_heart);
      iou_l.push_back(r.iou_lungs);
      if (!std::isnan(r.ctr_pred)) {
        cp.push_back(r.ctr_pred);
        cg.push_back(r.ctr_gt);
      }
    }
    auto mean_of = [](const std::vector<double>& v) {
      double a = 0;
      for (double x : v) a += x;
      return a / double(v.size());
    };
    auto ci_h = bootstrap_ci(iou_h, 2000, 0.95, rng::key3(seed, 1, uint64_t(T)));
    auto ci_l = bootstrap_ci(iou_l, 2000, 0.95, rng::key3(seed, 2, uint64_t(T)));
    out.push_back({T, "iou_heart", mean_of(iou_h), ci_h.first, ci_h.second});
    out.push_back({T, "iou_lungs", mean_of(iou_l), ci_l.first, ci_l.second});

    // Pearson r of CTR, bootstrapped over image pairs; degenerate resamples
    // (zero variance) are skipped.
    double r_ctr = std::nan("");
    double lo = std::nan(""), hi = std::nan("");
    if (cp.size() >= 2) {
      bool degenerate = false;
      try {
        r_ctr = pearson(cp, cg);
      } catch (const NumericError&) {
        degenerate = true;
      }
      if (!degenerate) {
        std::vector<double> rs;
        rs.reserve(2000);
        const uint64_t bk = rng::key3(seed, 3, uint64_t(T));
        std::vector<double> bx(cp.size()), by(cp.size());
        for (int b = 0; b < 2000; ++b) {
          const uint64_t rk = rng::key2(bk, uint64_t(b));
          for (size_t j = 0; j < cp.size(); ++j) {
            size_t idx = rng::uniform_int(rng::key2(rk, j), cp.size());
            bx[j] = cp[idx];
            by[j] = cg[idx];
          }
          try {
            rs.push_back(pearson(bx, by));
          } catch (const NumericError&) {
          }
        }
        if (!rs.empty()) {
          std::sort(rs.begin(), rs.end());
          lo = percentile_linear(rs, 0.025);
          hi = percentile_linear(rs, 0.975);
        }
      }
    }
    out.push_back({T, "pearson_ctr", r_ctr, lo, hi});
  }
  return out;
}

}  // namespace bfpn
