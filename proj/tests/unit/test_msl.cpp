#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "hybridreg/msl.hpp"
#include "oracles.hpp"

using namespace hybridreg;
using namespace hybridreg::msl;

namespace {

double max_diff(const FeatureTensor& a, const FeatureTensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST_CASE("serialize") {
  const FeatureTensor one = random_tensor({1, 1, 1}, 3, 1);
  CHECK(serialize(one).size() == 1);

  const FeatureTensor z = random_tensor({5, 4, 3}, 2, 2);
  CHECK(deserialize(serialize(z), z.dims).data == z.data);

  FeatureTensor e({3, 2, 2}, 1);
  for (int zz = 0; zz < 2; ++zz)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 3; ++x) e.at(0, e.voxel_index(x, y, zz)) = 100 * x + 10 * y + zz;
  const Sequence s = serialize(e);
  for (int zz = 0; zz < 2; ++zz)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 3; ++x) CHECK(s[static_cast<std::size_t>(x + 3 * (y + 2 * zz))][0] == 100 * x + 10 * y + zz);
}

TEST_CASE("ssm_scan") {
  const auto p = random_params(2, 3, {4, 4, 4}, 61).ssm;
  SUBCASE("zero input gives zero output") {
    const Sequence y = ssm_scan(Sequence(10, std::vector<double>(2, 0.0)), p);
    for (const auto& v : y) CHECK((v[0] == 0.0 && v[1] == 0.0));
  }
  SUBCASE("length-4 sequence against the unrolled recurrence in extended precision") {
    const Sequence x = serialize(random_tensor({4, 1, 1}, 2, 62));
    const Sequence y = ssm_scan(x, p);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t t = 0; t < 4; ++t) {
        long double ref = 0.0L;
        for (std::size_t k = 0; k <= t; ++k)
          for (std::size_t s = 0; s < 3; ++s)
            ref += static_cast<long double>(p.c_out[c * 3 + s]) *
                   std::pow(std::exp(static_cast<long double>(p.delta[c]) * p.a[s]), static_cast<long double>(t - k)) *
                   p.delta[c] * p.b[c * 3 + s] * x[k][c];
        CHECK(std::abs(static_cast<double>(ref) - y[t][c]) <= 1e-6);
      }
  }
  SUBCASE("causality") {
    Sequence x = serialize(random_tensor({6, 1, 1}, 2, 63));
    const Sequence y0 = ssm_scan(x, p);
    x[2][0] += 5.0;
    x[2][1] -= 3.0;
    const Sequence y1 = ssm_scan(x, p);
    CHECK(y0[0] == y1[0]);
    CHECK(y0[1] == y1[1]);
    CHECK(y0[2] != y1[2]);
  }
  SUBCASE("linearity") {
    const Sequence x = serialize(random_tensor({30, 1, 1}, 2, 64));
    const Sequence w = serialize(random_tensor({30, 1, 1}, 2, 65));
    Sequence mix = x;
    for (std::size_t t = 0; t < x.size(); ++t)
      for (std::size_t c = 0; c < 2; ++c) mix[t][c] = 1.7 * x[t][c] - 0.4 * w[t][c];
    const Sequence yx = ssm_scan(x, p), yw = ssm_scan(w, p), ym = ssm_scan(mix, p);
    for (std::size_t t = 0; t < x.size(); ++t)
      for (std::size_t c = 0; c < 2; ++c) REQUIRE(std::abs(ym[t][c] - (1.7 * yx[t][c] - 0.4 * yw[t][c])) <= 1e-6);
  }
  SUBCASE("stability: impulse states shrink monotonically") {
    for (int c = 0; c < 2; ++c) {
      const auto h = ssm_impulse_states(p, c, 40);
      for (std::size_t t = 1; t < h.size(); ++t)
        for (std::size_t s = 0; s < h[t].size(); ++s) REQUIRE(std::abs(h[t][s]) <= std::abs(h[t - 1][s]));
    }
  }
  SUBCASE("parameter validation") {
    SsmParams bad = p;
    bad.a[0] = 0.5;
    CHECK_THROWS_AS(bad.validate(2), ArgumentError);
  }
}

TEST_CASE("window_attention") {
  auto rp = random_params(2, 2, {4, 4, 4}, 66);
  SUBCASE("identical keys give the mean of the values") {
    const FeatureTensor z = random_tensor({4, 4, 4}, 2, 67);
    AttnParams a = rp.attn;
    std::fill(a.wk.begin(), a.wk.end(), 0.0);
    const FeatureTensor out = window_attention(z, a);
    for (int c = 0; c < 2; ++c) {
      double mean = 0.0;
      for (std::size_t i = 0; i < 64; ++i)
        for (int k = 0; k < 2; ++k) mean += a.wv[static_cast<std::size_t>(c * 2 + k)] * z.at(k, i) / 64.0;
      for (std::size_t i = 0; i < 64; ++i) REQUIRE(std::abs(out.at(c, i) - mean) <= 1e-12);
    }
  }
  SUBCASE("attention rows sum to one") {
    const FeatureTensor z = random_tensor({6, 5, 7}, 2, 68);
    for (const Index3 shift : {Index3{0, 0, 0}, Index3{2, 1, 3}}) {
      AttnParams a = rp.attn;
      a.shift = shift;
      for (int x = 0; x < 6; ++x) {
        const auto row = attention_row(z, a, {x, 2, 3});
        double s = 0.0;
        for (double w : row) s += w;
        REQUIRE(std::abs(s - 1.0) <= 1e-6);
      }
    }
  }
  SUBCASE("zero shift keeps windows independent") {
    FeatureTensor z = random_tensor({8, 4, 4}, 2, 69);
    const FeatureTensor before = window_attention(z, rp.attn);
    for (int zz = 0; zz < 4; ++zz)
      for (int y = 0; y < 4; ++y)
        for (int x = 4; x < 8; ++x)
          for (int c = 0; c < 2; ++c) z.at(c, z.voxel_index(x, y, zz)) = 0.0;
    const FeatureTensor after = window_attention(z, rp.attn);
    for (int zz = 0; zz < 4; ++zz)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
          for (int c = 0; c < 2; ++c) {
            const std::size_t i = z.voxel_index(x, y, zz);
            REQUIRE(after.at(c, i) == before.at(c, i));
          }
  }
  SUBCASE("a shift lets neighbouring windows exchange information") {
    const FeatureTensor z = random_tensor({8, 4, 4}, 2, 70);
    FeatureTensor bumped = z;
    bumped.at(0, z.voxel_index(3, 1, 1)) += 1.0;
    const std::size_t probe = z.voxel_index(4, 1, 1);
    AttnParams shifted = rp.attn;
    shifted.shift = {2, 2, 2};
    CHECK(window_attention(z, rp.attn).at(0, probe) == window_attention(bumped, rp.attn).at(0, probe));
    CHECK(std::abs(window_attention(z, shifted).at(0, probe) - window_attention(bumped, shifted).at(0, probe)) > 1e-6);
  }
}

TEST_CASE("gate_fuse") {
  const FeatureTensor zm = random_tensor({3, 3, 3}, 2, 71);
  const FeatureTensor zs = random_tensor({3, 3, 3}, 2, 72);
  GateParams zero{std::vector<double>(8, 0.0), std::vector<double>(2, 0.0)};
  const FeatureTensor half = gate_fuse(zm, zs, zero);
  for (std::size_t i = 0; i < half.data.size(); ++i)
    CHECK(half.data[i] == doctest::Approx(0.5 * (zm.data[i] + zs.data[i])));

  GateParams hot = zero;
  hot.bias = {20.0, 20.0};
  CHECK(max_diff(gate_fuse(zm, zs, hot), zm) <= 1e-6 * 4);

  const auto p = random_params(2, 2, {4, 4, 4}, 73).gate;
  const FeatureTensor f = gate_fuse(zm, zs, p);
  const FeatureTensor g = gate_values(zm, zs, p);
  const std::size_t n = zm.voxel_count();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < 2; ++r) {
      double logit = p.bias[r];
      for (std::size_t c = 0; c < 2; ++c)
        logit += p.wg[r * 4 + c] * zm.data[c * n + i] + p.wg[r * 4 + 2 + c] * zs.data[c * n + i];
      const double gv = 1.0 / (1.0 + std::exp(-logit));
      const double expect = gv * zm.data[r * n + i] + (1.0 - gv) * zs.data[r * n + i];
      REQUIRE(g.data[r * n + i] > 0.0);
      REQUIRE(g.data[r * n + i] < 1.0);
      REQUIRE(std::abs(f.data[r * n + i] - expect) <= 1e-10);
      REQUIRE(f.data[r * n + i] >= std::min(zm.data[r * n + i], zs.data[r * n + i]));
      REQUIRE(f.data[r * n + i] <= std::max(zm.data[r * n + i], zs.data[r * n + i]));
    }
  CHECK_THROWS_AS(gate_fuse(zm, random_tensor({3, 3, 2}, 2, 1), p), ArgumentError);
}

TEST_CASE("msl_forward") {
  auto rp = random_params(2, 3, {4, 4, 4}, 74);
  const FeatureTensor z = random_tensor({4, 4, 4}, 2, 75);

  SUBCASE("gate saturated towards the attention branch") {
    GateParams cold{std::vector<double>(8, 0.0), std::vector<double>(2, -20.0)};
    CHECK(max_diff(msl_forward(z, rp.ssm, rp.attn, cold), window_attention(z, rp.attn)) <= 1e-6 * 4);
  }
  SUBCASE("equals gate_fuse of the two branches") {
    const FeatureTensor zm = deserialize(ssm_scan(serialize(z), rp.ssm), z.dims);
    const FeatureTensor zs = window_attention(z, rp.attn);
    CHECK(max_diff(msl_forward(z, rp.ssm, rp.attn, rp.gate), gate_fuse(zm, zs, rp.gate)) == 0.0);
  }
  SUBCASE("zero input with zero gate bias is deterministic and zero-mean") {
    const FeatureTensor zero({4, 4, 4}, 2);
    GateParams g = rp.gate;
    g.bias = {0.0, 0.0};
    const FeatureTensor a = msl_forward(zero, rp.ssm, rp.attn, g);
    const FeatureTensor b = msl_forward(zero, rp.ssm, rp.attn, g);
    CHECK(a.data == b.data);
    double sum = 0.0;
    for (double v : a.data) sum += v;
    CHECK(sum == 0.0);
  }
}
