#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>
#include <vector>

#include "bfpn/kernels.hpp"
#include "bfpn/rng.hpp"
#include "doctest.h"

using namespace bfpn;
using kernels::Conv2dDims;

namespace {

std::vector<float> random_vec(size_t n, uint64_t key, double lo = -1.0,
                              double hi = 1.0) {
  std::vector<float> v(n);
  for (size_t i = 0; i < n; ++i)
    v[i] = float(rng::uniform(rng::key2(key, i), lo, hi));
  return v;
}

bool bits_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

struct ConvCase {
  int n, cin, hin, win, cout, k, stride, pad;
};

Conv2dDims make_dims(const ConvCase& c) {
  Conv2dDims d;
  d.n = c.n;
  d.cin = c.cin;
  d.hp = c.hin + 2 * c.pad;
  d.wp = c.win + 2 * c.pad;
  d.cout = c.cout;
  d.kh = d.kw = c.k;
  d.stride = c.stride;
  d.hout = (c.hin + 2 * c.pad - c.k) / c.stride + 1;
  d.wout = (c.win + 2 * c.pad - c.k) / c.stride + 1;
  return d;
}

const std::vector<ConvCase> kCases = {
    {1, 1, 5, 5, 1, 3, 1, 1},   {2, 3, 9, 9, 5, 3, 1, 1},
    {1, 4, 16, 16, 8, 3, 1, 1}, {2, 2, 8, 8, 4, 1, 1, 0},
    {1, 3, 10, 10, 6, 4, 2, 1}, {2, 2, 6, 6, 3, 2, 2, 0},
    {1, 8, 18, 18, 8, 3, 1, 1}, {1, 1, 7, 7, 2, 3, 1, 0},
    {1, 2, 33, 33, 3, 3, 1, 1},
};

}  // namespace

TEST_CASE("AVX2 conv kernels are bit-identical to the scalar reference") {
  if (!kernels::avx2_supported()) {
    MESSAGE("AVX2 not available on this host; dispatch covers scalar only");
    return;
  }
  const auto& sc = kernels::scalar_table();
  const auto& vx = kernels::avx2_table();
  int case_id = 0;
  for (const auto& c : kCases) {
    CAPTURE(case_id);
    Conv2dDims d = make_dims(c);
    const size_t in_n = size_t(d.n) * d.cin * d.hp * d.wp;
    const size_t w_n = size_t(d.cout) * d.cin * d.kh * d.kw;
    const size_t out_n = size_t(d.n) * d.cout * d.hout * d.wout;
    auto in = random_vec(in_n, rng::key2(11, case_id));
    auto w = random_vec(w_n, rng::key2(22, case_id));
    auto b = random_vec(size_t(d.cout), rng::key2(33, case_id));

    std::vector<float> out_s(out_n), out_v(out_n);
    sc.conv2d_forward(in.data(), w.data(), b.data(), out_s.data(), d);
    vx.conv2d_forward(in.data(), w.data(), b.data(), out_v.data(), d);
    CHECK(bits_equal(out_s, out_v));

    auto gout = random_vec(out_n, rng::key2(44, case_id));
    auto gin0 = random_vec(in_n, rng::key2(55, case_id), -0.1, 0.1);
    std::vector<float> gin_s = gin0, gin_v = gin0;
    sc.conv2d_backward_input(gout.data(), w.data(), gin_s.data(), d);
    vx.conv2d_backward_input(gout.data(), w.data(), gin_v.data(), d);
    CHECK(bits_equal(gin_s, gin_v));

    auto gw0 = random_vec(w_n, rng::key2(66, case_id), -0.1, 0.1);
    std::vector<float> gw_s = gw0, gw_v = gw0;
    sc.conv2d_backward_weight(in.data(), gout.data(), gw_s.data(), d);
    vx.conv2d_backward_weight(in.data(), gout.data(), gw_v.data(), d);
    CHECK(bits_equal(gw_s, gw_v));
    ++case_id;
  }
}

TEST_CASE("AVX2 elementwise kernels are bit-identical to scalar") {
  if (!kernels::avx2_supported()) return;
  const auto& sc = kernels::scalar_table();
  const auto& vx = kernels::avx2_table();
  for (size_t n : {1u, 7u, 8u, 9u, 64u, 1000u, 4097u}) {
    CAPTURE(n);
    auto a = random_vec(n, rng::key2(1, n), -3.0, 3.0);
    auto b = random_vec(n, rng::key2(2, n), -3.0, 3.0);
    std::vector<float> s(n), v(n);

    sc.add(a.data(), b.data(), s.data(), n);
    vx.add(a.data(), b.data(), v.data(), n);
    CHECK(bits_equal(s, v));

    sc.mul(a.data(), b.data(), s.data(), n);
    vx.mul(a.data(), b.data(), v.data(), n);
    CHECK(bits_equal(s, v));

    std::vector<float> acc0 = random_vec(n, rng::key2(3, n));
    s = acc0;
    v = acc0;
    sc.mul_acc(a.data(), b.data(), s.data(), n);
    vx.mul_acc(a.data(), b.data(), v.data(), n);
    CHECK(bits_equal(s, v));

    sc.relu(a.data(), s.data(), n);
    vx.relu(a.data(), v.data(), n);
    CHECK(bits_equal(s, v));

    s = acc0;
    v = acc0;
    sc.relu_backward(b.data(), a.data(), s.data(), n);
    vx.relu_backward(b.data(), a.data(), v.data(), n);
    CHECK(bits_equal(s, v));

    sc.scale(a.data(), 1.7f, s.data(), n);
    vx.scale(a.data(), 1.7f, v.data(), n);
    CHECK(bits_equal(s, v));

    s = acc0;
    v = acc0;
    sc.axpy(-0.3f, a.data(), s.data(), n);
    vx.axpy(-0.3f, a.data(), v.data(), n);
    CHECK(bits_equal(s, v));
  }
}

TEST_CASE("AVX2 Adam step is bit-identical to scalar") {
  if (!kernels::avx2_supported()) return;
  const auto& sc = kernels::scalar_table();
  const auto& vx = kernels::avx2_table();
  for (size_t n : {3u, 8u, 61u, 1024u}) {
    CAPTURE(n);
    kernels::AdamStep hp{0.9f, 0.999f, 1e-8f, 1e-3f, 1.0f / (1 - 0.9f),
                         1.0f / (1 - 0.999f)};
    auto p0 = random_vec(n, rng::key2(7, n));
    auto m0 = random_vec(n, rng::key2(8, n), -0.01, 0.01);
    auto v0 = random_vec(n, rng::key2(9, n), 0.0, 0.01);
    auto g = random_vec(n, rng::key2(10, n));
    auto ps = p0, ms = m0, vs = v0;
    auto pv = p0, mv = m0, vv = v0;
    sc.adam_step(ps.data(), ms.data(), vs.data(), g.data(), n, hp);
    vx.adam_step(pv.data(), mv.data(), vv.data(), g.data(), n, hp);
    CHECK(bits_equal(ps, pv));
    CHECK(bits_equal(ms, mv));
    CHECK(bits_equal(vs, vv));
  }
}

TEST_CASE("kernel dispatch selects a table") {
  const auto& t = kernels::active();
  CHECK((std::string(t.name) == "avx2" || std::string(t.name) == "scalar"));
  if (kernels::avx2_supported())
    CHECK(std::string(kernels::avx2_table().name) == "avx2");
}
