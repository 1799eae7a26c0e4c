#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>

#include "bfpn/loss.hpp"
#include "bfpn/ops.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace bfpn;
using testutil::max_fd_rel_error;
using testutil::random_tensor;

TEST_CASE("conv2d identity kernel reproduces the input") {
  auto x = random_tensor<double>({1, 1, 3, 3}, 101, -1, 1);
  Tensor<double> k({1, 1, 3, 3});
  k.data()[4] = 1.0;  // center tap
  Tensor<double> b({1});
  auto y = conv2d(x, k, b, 1, 1);
  REQUIRE(y.shape() == x.shape());
  for (size_t i = 0; i < x.numel(); ++i)
    CHECK(y.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-12));
}

TEST_CASE("conv2d all-ones 2x2 valid convolution") {
  auto x = Tensor<double>::full({1, 1, 2, 2}, 1.0);
  auto k = Tensor<double>::full({1, 1, 2, 2}, 1.0);
  Tensor<double> b({1});
  auto y = conv2d(x, k, b, 1, 0);
  REQUIRE(y.numel() == 1);
  CHECK(y.item() == doctest::Approx(4.0));
}

TEST_CASE("conv2d rejects bad geometry") {
  Tensor<double> x({1, 1, 5, 5});
  Tensor<double> k({1, 1, 2, 2});
  Tensor<double> b({1});
  CHECK_THROWS_AS(conv2d(x, k, b, 2, 0), std::invalid_argument);
  Tensor<double> k2({1, 2, 3, 3});
  CHECK_THROWS_AS(conv2d(x, k2, b, 1, 1), std::invalid_argument);
  Tensor<double> b2({3});
  Tensor<double> k3({1, 1, 3, 3});
  CHECK_THROWS_AS(conv2d(x, k3, b2, 1, 1), std::invalid_argument);
}

TEST_CASE("conv2d gradients match finite differences") {
  auto x = random_tensor<double>({2, 3, 5, 5}, 7, -1, 1, true);
  auto k = random_tensor<double>({4, 3, 3, 3}, 8, -0.5, 0.5, true);
  auto b = random_tensor<double>({4}, 9, -0.1, 0.1, true);
  auto loss = [&]() {
    return reduce_mean(mul(conv2d(x, k, b, 1, 1), conv2d(x, k, b, 1, 1)),
                       {0, 1, 2, 3});
  };
  CHECK(max_fd_rel_error<double>(loss, {x, k, b}) < 1e-4);
}

TEST_CASE("strided conv2d gradients match finite differences") {
  auto x = random_tensor<double>({1, 2, 6, 6}, 17, -1, 1, true);
  auto k = random_tensor<double>({3, 2, 4, 4}, 18, -0.5, 0.5, true);
  auto b = random_tensor<double>({3}, 19, -0.1, 0.1, true);
  auto loss = [&]() {
    auto y = conv2d(x, k, b, 2, 1);
    return reduce_sum(mul(y, y), {0, 1, 2, 3});
  };
  CHECK(max_fd_rel_error<double>(loss, {x, k, b}) < 1e-4);
}

TEST_CASE("upsample_nearest replicates blocks") {
  auto x = Tensor<double>::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  auto y = upsample_nearest(x, 2);
  std::vector<double> want = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  REQUIRE(y.numel() == want.size());
  for (size_t i = 0; i < want.size(); ++i) CHECK(y.data()[i] == want[i]);

  auto id = upsample_nearest(x, 1);
  CHECK(std::memcmp(id.data(), x.data(), x.numel() * sizeof(double)) == 0);
}

TEST_CASE("upsample_nearest backward sums over blocks") {
  auto x = random_tensor<double>({1, 1, 2, 2}, 3, -1, 1, true);
  auto y = upsample_nearest(x, 2);
  auto loss = reduce_sum(y, {0, 1, 2, 3});
  backward(loss);
  for (size_t i = 0; i < 4; ++i) CHECK(x.grad()[i] == doctest::Approx(4.0));
}

TEST_CASE("upsample_nearest then mean-pool recovers the input exactly") {
  for (int factor : {2, 3}) {
    auto x = random_tensor<float>({2, 3, 4, 5}, 1000 + factor, -2, 2);
    auto y = upsample_nearest(x, factor);
    const int h = 4, w = 5, ho = h * factor, wo = w * factor;
    for (int64_t plane = 0; plane < 6; ++plane) {
      for (int iy = 0; iy < h; ++iy)
        for (int ix = 0; ix < w; ++ix) {
          double acc = 0;
          for (int dy = 0; dy < factor; ++dy)
            for (int dx = 0; dx < factor; ++dx)
              acc += double(y.data()[(plane * ho + iy * factor + dy) * wo +
                                     ix * factor + dx]);
          float pooled = float(acc / (factor * factor));
          CHECK(pooled == x.data()[(plane * h + iy) * w + ix]);
        }
    }
  }
}

TEST_CASE("upsample_bilinear half-pixel convention") {
  auto c = Tensor<double>::full({1, 1, 3, 3}, 0.7);
  auto yc = upsample_bilinear(c, 2);
  for (size_t i = 0; i < yc.numel(); ++i)
    CHECK(yc.data()[i] == doctest::Approx(0.7).epsilon(1e-12));

  auto row = Tensor<double>::from_data({1, 1, 1, 2}, {0.0, 2.0});
  auto y = upsample_bilinear(row, 2);
  // both output rows carry the interpolated row [0, 0.5, 1.5, 2]
  std::vector<double> want = {0.0, 0.5, 1.5, 2.0};
  REQUIRE(y.shape() == std::vector<int>{1, 1, 2, 4});
  for (size_t r = 0; r < 2; ++r)
    for (size_t i = 0; i < 4; ++i)
      CHECK(y.data()[r * 4 + i] == doctest::Approx(want[i]).epsilon(1e-12));

  auto id = upsample_bilinear(row, 1);
  CHECK(std::memcmp(id.data(), row.data(), row.numel() * sizeof(double)) == 0);
}

TEST_CASE("upsample_bilinear gradients match finite differences") {
  auto x = random_tensor<double>({1, 2, 3, 4}, 5, -1, 1, true);
  auto loss = [&]() {
    auto y = upsample_bilinear(x, 2);
    return reduce_sum(mul(y, y), {0, 1, 2, 3});
  };
  CHECK(max_fd_rel_error<double>(loss, {x}) < 1e-4);
}

TEST_CASE("elementwise op values") {
  auto z = Tensor<double>::from_data({1}, {0.0});
  CHECK(sigmoid(z).item() == doctest::Approx(0.5));
  auto a = Tensor<double>::from_data({2}, {-3.0, 3.0});
  auto r = relu(a);
  CHECK(r.data()[0] == 0.0);
  CHECK(r.data()[1] == 3.0);
  auto bad = Tensor<double>::from_data({2}, {1.0, -2.0});
  CHECK_THROWS_AS(log(bad), std::domain_error);
  auto ok = Tensor<double>::from_data({2}, {1.0, std::exp(1.0)});
  auto lg = log(ok);
  CHECK(lg.data()[0] == doctest::Approx(0.0));
  CHECK(lg.data()[1] == doctest::Approx(1.0));
  CHECK(neg(a).data()[0] == 3.0);
  CHECK(scalar_mul(a, 2.0).data()[1] == 6.0);
  auto s = add(a, a);
  CHECK(s.data()[1] == 6.0);
  auto m = mul(a, a);
  CHECK(m.data()[0] == 9.0);
  CHECK_THROWS_AS(add(a, z), std::invalid_argument);
}

TEST_CASE("sigmoid gradients are tight (64-bit)") {
  auto x = random_tensor<double>({3, 4}, 21, -2, 2, true);
  auto loss = [&]() { return reduce_sum(sigmoid(x), {0, 1}); };
  CHECK(max_fd_rel_error<double>(loss, {x}) < 1e-6);
}

TEST_CASE("elementwise gradients match finite differences") {
  auto a = random_tensor<double>({2, 5}, 31, 0.5, 2.0, true);
  auto b = random_tensor<double>({2, 5}, 32, -1.5, -0.2, true);
  auto loss = [&]() {
    auto t = mul(a, add(a, neg(b)));
    t = add(t, scalar_mul(log(a), 0.7));
    return reduce_mean(t, {0, 1});
  };
  CHECK(max_fd_rel_error<double>(loss, {a, b}) < 1e-6);
}

TEST_CASE("reduce semantics") {
  auto x = Tensor<double>::from_data({3}, {1, 2, 3});
  CHECK(reduce_mean(x, {0}).item() == doctest::Approx(2.0));

  // empty axis list is the identity
  auto x2 = random_tensor<double>({2, 3}, 40, -1, 1);
  auto same = reduce_sum(x2, {});
  CHECK(same.shape() == x2.shape());
  CHECK(std::memcmp(same.data(), x2.data(), x2.numel() * sizeof(double)) == 0);

  CHECK_THROWS_AS(reduce_sum(x2, {2}), std::invalid_argument);
  CHECK_THROWS_AS(reduce_sum(x2, {0, 0}), std::invalid_argument);

  // grad of mean is 1/n
  auto w = random_tensor<double>({4}, 41, -1, 1, true);
  auto m = reduce_mean(w, {0});
  backward(m);
  for (int i = 0; i < 4; ++i) CHECK(w.grad()[i] == doctest::Approx(0.25));

  // row sums over axis 1
  auto x3 = Tensor<double>::from_data({2, 2}, {1, 2, 3, 4});
  auto rs = reduce_sum(x3, {1});
  REQUIRE(rs.shape() == std::vector<int>{2});
  CHECK(rs.data()[0] == 3.0);
  CHECK(rs.data()[1] == 7.0);
}

TEST_CASE("reduce gradients match finite differences") {
  auto x = random_tensor<double>({2, 3, 4}, 50, -1, 1, true);
  auto loss = [&]() {
    auto partial = reduce_mean(x, {1});       // [2,4]
    return reduce_sum(mul(partial, partial), {0, 1});
  };
  CHECK(max_fd_rel_error<double>(loss, {x}) < 1e-6);
}

TEST_CASE("backward basics") {
  auto w = Tensor<double>::from_data({2}, {1, 2}, true);
  auto loss = reduce_sum(mul(w, w), {0});
  backward(loss);
  CHECK(w.grad()[0] == doctest::Approx(2.0));
  CHECK(w.grad()[1] == doctest::Approx(4.0));

  // reuse accumulates both contributions: d/dw (w*w + w) = 2w + 1
  w.zero_grad();
  auto loss2 = reduce_sum(add(mul(w, w), w), {0});
  backward(loss2);
  CHECK(w.grad()[0] == doctest::Approx(3.0));
  CHECK(w.grad()[1] == doctest::Approx(5.0));

  auto vec = random_tensor<double>({3}, 60, -1, 1, true);
  auto nonscalar = mul(vec, vec);
  CHECK_THROWS_AS(backward(nonscalar), std::invalid_argument);
  Tape<double>::get().clear();

  auto lone = Tensor<double>::scalar(1.0, true);
  CHECK_THROWS_AS(backward(lone), std::invalid_argument);
}

TEST_CASE("three-layer toy net gradients (64-bit and 32-bit)") {
  auto x64 = random_tensor<double>({2, 2, 6, 6}, 70, 0.0, 1.0);
  auto k1 = random_tensor<double>({3, 2, 3, 3}, 71, -0.5, 0.5, true);
  auto b1 = random_tensor<double>({3}, 72, -0.1, 0.1, true);
  auto k2 = random_tensor<double>({2, 3, 3, 3}, 73, -0.5, 0.5, true);
  auto b2 = random_tensor<double>({2}, 74, -0.1, 0.1, true);
  auto tgt = random_tensor<double>({2, 2, 6, 6}, 75, 0.0, 1.0);
  for (size_t i = 0; i < tgt.numel(); ++i)
    tgt.data()[i] = tgt.data()[i] > 0.5 ? 1.0 : 0.0;
  auto loss64 = [&]() {
    auto h = relu(conv2d(x64, k1, b1, 1, 1));
    auto o = sigmoid(conv2d(h, k2, b2, 1, 1));
    return bce(o, tgt);
  };
  CHECK(max_fd_rel_error<double>(loss64, {k1, b1, k2, b2}) < 1e-5);

  // same net in float32 with a coarser step
  auto xf = random_tensor<float>({2, 2, 6, 6}, 80, 0.0, 1.0);
  auto kf1 = random_tensor<float>({3, 2, 3, 3}, 81, -0.5, 0.5, true);
  auto bf1 = random_tensor<float>({3}, 82, -0.1, 0.1, true);
  auto kf2 = random_tensor<float>({2, 3, 3, 3}, 83, -0.5, 0.5, true);
  auto bf2 = random_tensor<float>({2}, 84, -0.1, 0.1, true);
  auto tf = random_tensor<float>({2, 2, 6, 6}, 85, 0.0, 1.0);
  for (size_t i = 0; i < tf.numel(); ++i)
    tf.data()[i] = tf.data()[i] > 0.5f ? 1.0f : 0.0f;
  // smooth activations: the coarse float32 step cannot sit on a relu kink
  auto loss32 = [&]() {
    auto h = sigmoid(conv2d(xf, kf1, bf1, 1, 1));
    auto o = sigmoid(conv2d(h, kf2, bf2, 1, 1));
    return bce(o, tf);
  };
  CHECK(max_fd_rel_error<float>(loss32, {kf1, bf1, kf2, bf2}, 1e-2, 0, 1e-2) <
        1e-3);
}

TEST_CASE("forward ops are deterministic") {
  auto x = random_tensor<float>({2, 3, 8, 8}, 90, -1, 1);
  auto k = random_tensor<float>({4, 3, 3, 3}, 91, -1, 1);
  auto b = random_tensor<float>({4}, 92, -1, 1);
  auto y1 = conv2d(x, k, b, 1, 1);
  auto y2 = conv2d(x, k, b, 1, 1);
  CHECK(std::memcmp(y1.data(), y2.data(), y1.numel() * sizeof(float)) == 0);
}

TEST_CASE("concat and slice round trip with gradients") {
  auto a = random_tensor<double>({2, 2, 3, 3}, 95, -1, 1, true);
  auto b = random_tensor<double>({2, 1, 3, 3}, 96, -1, 1, true);
  auto cat = concat_channels<double>({a, b});
  REQUIRE(cat.shape() == std::vector<int>{2, 3, 3, 3});
  auto back_a = slice_channels(cat, 0, 2);
  auto back_b = slice_channels(cat, 2, 1);
  CHECK(std::memcmp(back_a.data(), a.data(), a.numel() * sizeof(double)) == 0);
  CHECK(std::memcmp(back_b.data(), b.data(), b.numel() * sizeof(double)) == 0);
  Tape<double>::get().clear();

  auto loss = [&]() {
    auto c = concat_channels<double>({a, b});
    auto s = slice_channels(c, 1, 2);
    return reduce_sum(mul(s, s), {0, 1, 2, 3});
  };
  CHECK(max_fd_rel_error<double>(loss, {a, b}) < 1e-6);
}
