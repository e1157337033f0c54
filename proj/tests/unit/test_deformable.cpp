#include <doctest.h>

#include <cmath>

#include "gradient_check.hpp"
#include "hybridreg/deformable.hpp"
#include "hybridreg/metrics.hpp"
#include "hybridreg/phantom.hpp"
#include "oracles.hpp"

using namespace hybridreg;
using namespace hybridreg::testing;

namespace {

// Trilinear tent weight of control point k at voxel coordinate x.
double tent(double x, int k, double spacing) { return std::max(0.0, 1.0 - std::abs(x / spacing - k)); }

DescriptorVolume random_descriptors(const Grid& g, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DescriptorVolume d(g, 6);
  for (int k = 0; k < 6; ++k)
    for (auto& x : d.channel(k)) x = static_cast<float>(u(rng));
  return d;
}

double sample(std::span<const float> d, const Index3& dims, Vec3 p) {
  int i0[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    p[a] = std::clamp(p[a], 0.0, double(dims[a] - 1));
    i0[a] = std::min(static_cast<int>(std::floor(p[a])), std::max(dims[a] - 2, 0));
    f[a] = p[a] - i0[a];
  }
  double v = 0.0;
  for (int c = 0; c < 8; ++c) {
    int q[3];
    double w = 1.0;
    for (int a = 0; a < 3; ++a) {
      const int b = (c >> a) & 1;
      q[a] = std::min(i0[a] + b, dims[a] - 1);
      w *= b ? f[a] : 1.0 - f[a];
    }
    v += w * d[static_cast<std::size_t>(q[0] + dims[0] * (q[1] + dims[1] * q[2]))];
  }
  return v;
}

// Straight-line objective: upsample with tent weights, warp each channel,
// mean squared residual, plus lambda times the forward-difference penalty.
double objective_reference(const DescriptorVolume& fixed, const DescriptorVolume& moving, const ControlGrid& cg,
                           const DisplacementField& rigid, double lambda, bool smooth_hybrid) {
  const Grid& g = fixed.grid();
  const std::size_t n = g.voxel_count(), np = cg.point_count();
  std::vector<Vec3> u(n, Vec3{0, 0, 0});
  for (std::size_t i = 0; i < n; ++i) {
    const Index3 x = g.coords(i);
    for (int k = 0; k < cg.cdims[2]; ++k)
      for (int j = 0; j < cg.cdims[1]; ++j)
        for (int l = 0; l < cg.cdims[0]; ++l) {
          const double w = tent(x[0], l, cg.spacing_vox[0]) * tent(x[1], j, cg.spacing_vox[1]) *
                           tent(x[2], k, cg.spacing_vox[2]);
          for (int c = 0; c < 3; ++c) u[i][c] += w * cg.values[c * np + l + cg.cdims[0] * (j + cg.cdims[1] * k)];
        }
  }
  double sim = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Index3 x = g.coords(i);
    const Vec3 p = Vec3{double(x[0]), double(x[1]), double(x[2])} + u[i] + rigid.at(i);
    for (int k = 0; k < fixed.channels(); ++k) {
      const double r = fixed.channel(k)[i] - sample(moving.channel(k), g.dims, p);
      sim += r * r;
    }
  }
  sim /= double(n) * fixed.channels();
  if (smooth_hybrid)
    for (std::size_t i = 0; i < n; ++i) u[i] = u[i] + rigid.at(i);
  double smooth = 0.0;
  for (int a = 0; a < 3; ++a) {
    Index3 e{0, 0, 0};
    e[a] = 1;
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      long cnt = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const Index3 x = g.coords(i);
        if (x[a] + 1 >= g.dims[a]) continue;
        const double d = u[g.index(x[0] + e[0], x[1] + e[1], x[2] + e[2])][c] - u[i][c];
        s += d * d;
        ++cnt;
      }
      smooth += s / cnt;
    }
  }
  return sim + lambda * smooth / 3.0;
}

}  // namespace

TEST_CASE("upsample_grid") {
  const Grid g = make_grid(9, 8, 7);
  ControlGrid cg = ControlGrid::covering(g, 4.0);
  CHECK(cg.cdims == Index3{3, 3, 3});

  SUBCASE("zero grid gives a zero field") {
    const auto f = upsample_grid(cg, g);
    for (std::size_t i = 0; i < f.size(); ++i) REQUIRE(f.at(i) == Vec3{0, 0, 0});
  }
  SUBCASE("constant control values give a constant field") {
    const std::size_t np = cg.point_count();
    for (std::size_t p = 0; p < np; ++p) {
      cg.values[p] = 0.75;
      cg.values[np + p] = -1.5;
      cg.values[2 * np + p] = 2.0;
    }
    const auto f = upsample_grid(cg, g);
    for (std::size_t i = 0; i < f.size(); ++i) REQUIRE(norm(f.at(i) - Vec3{0.75, -1.5, 2.0}) <= 1e-6);
  }
  SUBCASE("one active control point gives the tent function") {
    cg.values[cg.index(1, 1, 1, 0)] = 1.0;
    const auto f = upsample_grid(cg, g);
    for (std::size_t i = 0; i < f.size(); ++i) {
      const Index3 x = g.coords(i);
      const double expect = tent(x[0], 1, 4.0) * tent(x[1], 1, 4.0) * tent(x[2], 0, 4.0);
      REQUIRE(std::abs(f.at(i)[1] - expect) <= 1e-6);
      REQUIRE(f.at(i)[0] == 0.0);
    }
    CHECK(f.at(4, 4, 0)[1] == 1.0f);
  }
  SUBCASE("grids that do not cover the image are rejected") {
    ControlGrid small = cg;
    small.cdims = {2, 3, 3};
    small.values.assign(3 * small.point_count(), 0.0);
    CHECK_THROWS_AS(upsample_grid(small, g), ArgumentError);
  }
}

TEST_CASE("objective") {
  Rng rng(91);
  const Grid g = make_grid(10, 9, 8);
  const DescriptorVolume a = random_descriptors(g, rng);
  const DescriptorVolume b = random_descriptors(g, rng);
  const DisplacementField zero(g);
  ControlGrid cg = ControlGrid::covering(g, 4.0);

  CHECK(std::abs(objective(a, a, cg, zero, 0.2)) <= 1e-8);

  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (double& v : cg.values) v = u(rng);
  const auto rigid = mask_field(rigid_to_displacement(RigidParams{{0.05, 0, -0.1}, {0.3, 1.2, 0}, {4, 4, 4}}, g),
                                random_labels(g, rng, 1, 0.5));
  const auto t0 = objective_terms(a, b, cg, rigid, 0.0);
  CHECK(t0.total == t0.similarity);
  CHECK(objective_terms(a, b, cg, rigid, 0.2).similarity == t0.similarity);
  CHECK(std::abs(objective(a, b, cg, rigid, 0.2) - objective_reference(a, b, cg, rigid, 0.2, false)) <= 1e-8);
  CHECK(std::abs(objective(a, b, cg, rigid, 0.2, SmoothTarget::kHybrid) -
                 objective_reference(a, b, cg, rigid, 0.2, true)) <= 1e-8);
}

TEST_CASE("objective_gradient") {
  SUBCASE("vanishes at the aligned minimum") {
    Rng rng(92);
    const Grid g = make_grid(12, 12, 12);
    const DescriptorVolume d = mind_descriptor(smooth_volume(g, rng));
    for (double v : objective_gradient(d, d, ControlGrid::spanning(g, {3, 3, 3}), DisplacementField(g), 0.0))
      REQUIRE(std::abs(v) <= 1e-8);
  }
  SUBCASE("matches central differences away from cell faces") {
    for (std::uint64_t s = 1; s <= 20; ++s) {
      CAPTURE(s);
      CHECK(check_gradient(s).rel_error <= 1e-4);
      CHECK(check_gradient(s, 0.2, SmoothTarget::kHybrid).rel_error <= 1e-4);
    }
  }
  SUBCASE("matches central differences on generic instances with a small step") {
    for (std::uint64_t s = 1; s <= 20; ++s) {
      CAPTURE(s);
      CHECK(check_gradient(s, 0.2, SmoothTarget::kDeformable, 1e-7, false).rel_error <= 1e-4);
    }
  }
  SUBCASE("smoothness-only gradient equals the difference stencil") {
    const Grid g = make_grid(9, 9, 9);
    const DescriptorVolume flat(g, 6, 0.5f);
    Rng rng(93);
    ControlGrid cg = ControlGrid::covering(g, 4.0);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& v : cg.values) v = u(rng);
    const double lambda = 0.7;
    const auto grad = objective_gradient(flat, flat, cg, DisplacementField(g), lambda);

    // dS/du(x) for S = (1/3) sum_a sum_c mean_x (u(x+e_a) - u(x))^2, pulled
    // back to control points with the tent weights.
    const std::size_t np = cg.point_count();
    std::vector<double> expect(3 * np, 0.0);
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
      const Index3 x = g.coords(i);
      Vec3 du{0, 0, 0};
      for (int a = 0; a < 3; ++a) {
        Index3 cnt = g.dims;
        cnt[a] -= 1;
        const double coef = 2.0 / (3.0 * cnt[0] * cnt[1] * cnt[2]);
        Index3 fwd = x, bwd = x;
        ++fwd[a];
        --bwd[a];
        // Rebuilt from the control values in double; the float field would
        // add rounding.
        auto at = [&](const Index3& q) {
          Vec3 v{0, 0, 0};
          for (std::size_t p = 0; p < np; ++p) {
            const int l = static_cast<int>(p % cg.cdims[0]);
            const int j = static_cast<int>((p / cg.cdims[0]) % cg.cdims[1]);
            const int k = static_cast<int>(p / (cg.cdims[0] * cg.cdims[1]));
            const double w = tent(q[0], l, 4.0) * tent(q[1], j, 4.0) * tent(q[2], k, 4.0);
            for (int c = 0; c < 3; ++c) v[c] += w * cg.values[c * np + p];
          }
          return v;
        };
        const Vec3 ux = at(x);
        if (fwd[a] < g.dims[a]) du = du - coef * (at(fwd) - ux);
        if (bwd[a] >= 0) du = du + coef * (ux - at(bwd));
      }
      for (std::size_t p = 0; p < np; ++p) {
        const int l = static_cast<int>(p % cg.cdims[0]);
        const int j = static_cast<int>((p / cg.cdims[0]) % cg.cdims[1]);
        const int k = static_cast<int>(p / (cg.cdims[0] * cg.cdims[1]));
        const double w = tent(x[0], l, 4.0) * tent(x[1], j, 4.0) * tent(x[2], k, 4.0);
        for (int c = 0; c < 3; ++c) expect[c * np + p] += lambda * w * du[c];
      }
    }
    for (std::size_t j = 0; j < grad.size(); ++j) REQUIRE(std::abs(grad[j] - expect[j]) <= 1e-8);
  }
}

TEST_CASE("optimize_deformable") {
  Rng rng(94);
  const Grid g = make_grid(16, 16, 16);
  const DescriptorVolume fixed = mind_descriptor(smooth_volume(g, rng));

  SUBCASE("aligned inputs stop at once with a zero grid") {
    const auto r = optimize_deformable(fixed, fixed, DisplacementField(g), {});
    CHECK(r.iterations == 1);
    CHECK(r.converged);
    for (double v : r.grid.values) CHECK(v == 0.0);
  }
  SUBCASE("best-so-far trace is non-increasing") {
    const DescriptorVolume moving = mind_descriptor(smooth_volume(g, rng));
    DeformableOptions o;
    o.max_iters = 40;
    const auto r = optimize_deformable(fixed, moving, DisplacementField(g), o);
    REQUIRE(r.best_trace.size() == r.loss_trace.size());
    for (std::size_t i = 1; i < r.best_trace.size(); ++i) CHECK(r.best_trace[i] <= r.best_trace[i - 1]);
    CHECK(r.best_trace.back() < r.loss_trace.front());
  }
  SUBCASE("non-finite loss aborts with the iteration index") {
    DescriptorVolume bad = fixed;
    bad.channel(0)[3] = std::nanf("");
    try {
      (void)optimize_deformable(fixed, bad, DisplacementField(g), {});
      FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
      CHECK(std::string(e.what()).find("iteration 1") != std::string::npos);
    }
  }
  SUBCASE("option validation") {
    DeformableOptions o;
    o.step_size = 0.0;
    CHECK_THROWS_AS(o.validate(), ArgumentError);
    o = {};
    o.max_iters = 0;
    CHECK_THROWS_AS(o.validate(), ArgumentError);
  }
}

TEST_CASE("larger lambda gives a smoother solution") {
  PhantomSpec s;
  s.seed = 3;
  s.dims = {40, 64, 32};
  s.vertebra_size = 16;
  const PhantomPair p = make_phantom(s);
  const DescriptorVolume fd = mind_descriptor(p.fixed), md = mind_descriptor(p.moving);
  double previous = 1e300;
  for (double lambda : {0.02, 0.2, 2.0}) {
    DeformableOptions o;
    o.lambda = lambda;
    o.max_iters = 80;
    const double smooth = smoothness_penalty(optimize_deformable(fd, md, DisplacementField(p.fixed.grid()), o).field);
    CAPTURE(lambda);
    CHECK(smooth < previous);
    previous = smooth;
  }
}

TEST_CASE("recovers a smooth background field") {
  PhantomSpec s;
  s.seed = 4;
  s.max_rot_deg = 0.0;
  s.max_trans_vox = 0.0;
  const PhantomPair p = make_phantom(s);
  const auto r = optimize_deformable(mind_descriptor(p.fixed), mind_descriptor(p.moving),
                                     DisplacementField(p.fixed.grid()), {});
  const LabelVolume fg = jacobian_foreground(p.fixed_labels);
  double sum = 0.0;
  long n = 0;
  for (std::size_t i = 0; i < fg.size(); ++i)
    if (fg[i]) {
      sum += norm(r.field.at(i) - p.gt_bg_field.at(i));
      ++n;
    }
  CHECK(sum / n <= 0.5);
}
