#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hybridreg/field.hpp"
#include "oracles.hpp"

using namespace hybridreg;
using namespace hybridreg::testing;

namespace {

double max_abs(const Mat3& a, const Mat3& b) {
  double m = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m = std::max(m, std::abs(a[i][j] - b[i][j]));
  return m;
}

bool fields_equal(const DisplacementField& a, const DisplacementField& b) {
  if (!(a.grid() == b.grid())) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.at(i) != b.at(i)) return false;
  return true;
}

Vec3 random_rotvec(Rng& rng, double max_angle) {
  std::normal_distribution<double> n;
  Vec3 axis{n(rng), n(rng), n(rng)};
  axis = (1.0 / norm(axis)) * axis;
  std::uniform_real_distribution<double> ang(0.0, max_angle);
  return ang(rng) * axis;
}

// u(x) = (A - I) x + b on every voxel.
DisplacementField affine_field(const Grid& g, const Mat3& a, const Vec3& b) {
  DisplacementField f(g);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Index3 p = g.coords(i);
    const Vec3 x{double(p[0]), double(p[1]), double(p[2])};
    f.set(i, a * x + b - x);
  }
  return f;
}

DisplacementField dyadic_field(const Grid& g, Rng& rng) {
  std::uniform_int_distribution<int> k(-64, 64);
  DisplacementField f(g);
  for (std::size_t i = 0; i < f.size(); ++i) f.set(i, {k(rng) / 8.0, k(rng) / 8.0, k(rng) / 8.0});
  return f;
}

}  // namespace

TEST_CASE("rotvec_to_matrix") {
  CHECK(max_abs(rotvec_to_matrix({0, 0, 0}), identity3()) == 0.0);

  const Mat3 q = rotvec_to_matrix({0, 0, std::numbers::pi / 2});
  const Vec3 e = q * Vec3{1, 0, 0};
  CHECK(norm(e - Vec3{0, 1, 0}) <= 1e-7);

  Rng rng(21);
  for (int t = 0; t < 1000; ++t) {
    const Vec3 r = random_rotvec(rng, std::numbers::pi);
    const Mat3 m = rotvec_to_matrix(r);
    REQUIRE(max_abs(transpose(m) * m, identity3()) <= 1e-6);
    REQUIRE(std::abs(determinant(m) - 1.0) <= 1e-6);
    REQUIRE(norm(matrix_to_rotvec(m) - r) <= 1e-6);
  }
}

TEST_CASE("RigidParams validation and recentring") {
  RigidParams p;
  p.rotation = {0, 0, 4.0};
  CHECK_THROWS_AS(p.validate(), ArgumentError);

  Rng rng(2);
  RigidParams q{random_rotvec(rng, 0.5), {1.0, -2.0, 0.5}, {3.0, 4.0, 5.0}};
  const RigidParams r = q.recentered({-1.0, 7.0, 2.0});
  for (const Vec3 x : {Vec3{0, 0, 0}, Vec3{10, -3, 4}, Vec3{2.5, 2.5, 9}}) CHECK(norm(q.apply(x) - r.apply(x)) <= 1e-9);
}

TEST_CASE("rigid_to_displacement") {
  const Grid g = make_grid(9, 9, 9);
  SUBCASE("identity gives the zero field") {
    const auto f = rigid_to_displacement(RigidParams{{0, 0, 0}, {0, 0, 0}, {4, 4, 4}}, g);
    for (std::size_t i = 0; i < f.size(); ++i) REQUIRE(f.at(i) == Vec3{0, 0, 0});
  }
  SUBCASE("translation is exact everywhere") {
    const auto f = rigid_to_displacement(RigidParams{{0, 0, 0}, {1, 2, 3}, {4, 4, 4}}, g);
    for (std::size_t i = 0; i < f.size(); ++i) REQUIRE(f.at(i) == Vec3{1, 2, 3});
  }
  SUBCASE("quarter turn about the grid centre") {
    const Vec3 t{0.5, -0.25, 2.0};
    const auto f = rigid_to_displacement(RigidParams{{0, 0, std::numbers::pi / 2}, t, {4, 4, 4}}, g);
    CHECK(norm(f.at(5, 4, 4) - (Vec3{-1, 1, 0} + t)) <= 1e-6);
  }
}

TEST_CASE("mask_field") {
  Rng rng(4);
  const Grid g = make_grid(5, 4, 3);
  const auto f = random_field(g, rng, 3.0);
  CHECK(fields_equal(mask_field(f, LabelVolume(g, std::vector<Label>(g.voxel_count(), 1))), f));
  CHECK(fields_equal(mask_field(f, LabelVolume(g)), DisplacementField(g)));

  const LabelVolume m = random_labels(g, rng, 1, 0.5);
  const auto masked = mask_field(f, m);
  for (std::size_t i = 0; i < f.size(); ++i) REQUIRE(masked.at(i) == (m[i] ? f.at(i) : Vec3{0, 0, 0}));

  CHECK_THROWS_AS(mask_field(f, LabelVolume(make_grid(5, 4, 2))), ArgumentError);
}

TEST_CASE("sum_fields") {
  Rng rng(6);
  const Grid g = make_grid(6, 5, 4);
  const auto f = random_field(g, rng, 2.0);
  CHECK(fields_equal(sum_fields(std::vector{f}), f));
  const auto zero = sum_fields(std::vector{f, negate(f)});
  for (std::size_t i = 0; i < zero.size(); ++i) REQUIRE(zero.at(i) == Vec3{0, 0, 0});
  CHECK_THROWS_AS(sum_fields(std::vector<DisplacementField>{}), ArgumentError);
  CHECK_THROWS_AS(sum_fields(std::vector{f, DisplacementField(make_grid(6, 5, 3))}), ArgumentError);

  SUBCASE("masked sum over a label partition is the piecewise field") {
    const LabelVolume labels = random_labels(g, rng, 3, 0.8);
    std::vector<DisplacementField> pieces;
    std::vector<DisplacementField> sources;
    for (Label id : labels.label_ids()) {
      sources.push_back(random_field(g, rng, 2.0));
      pieces.push_back(mask_field(sources.back(), binary_mask(labels, id)));
    }
    const auto total = sum_fields(pieces);
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
      Vec3 expect{0, 0, 0};
      for (std::size_t k = 0; k < labels.label_ids().size(); ++k)
        if (labels[i] == labels.label_ids()[k]) expect = sources[k].at(i);
      REQUIRE(total.at(i) == expect);
    }
    // Partition reconstruction: masked pieces add up to the field masked by the union.
    const auto shared = random_field(g, rng, 2.0);
    std::vector<DisplacementField> parts;
    for (Label id : labels.label_ids()) parts.push_back(mask_field(shared, binary_mask(labels, id)));
    CHECK(fields_equal(sum_fields(parts), mask_field(shared, foreground_mask(labels))));
  }
}

TEST_CASE("fuse_hybrid") {
  Rng rng(7);
  const Grid g = make_grid(5, 5, 5);
  const auto a = random_field(g, rng, 2.0);
  const auto b = random_field(g, rng, 2.0);
  CHECK(fields_equal(fuse_hybrid(DisplacementField(g), b), b));
  CHECK(fields_equal(fuse_hybrid(a, DisplacementField(g)), a));
  const auto s = fuse_hybrid(a, b);
  for (std::size_t i = 0; i < s.size(); ++i)
    for (int c = 0; c < 3; ++c) REQUIRE(s.channel(c)[i] == a.channel(c)[i] + b.channel(c)[i]);
  CHECK(fields_equal(fuse_hybrid(a, b), fuse_hybrid(b, a)));

  // On a dyadic lattice every partial sum is exact, so grouping cannot matter.
  const auto p = dyadic_field(g, rng), q = dyadic_field(g, rng), r = dyadic_field(g, rng);
  CHECK(fields_equal(fuse_hybrid(fuse_hybrid(p, q), r), fuse_hybrid(p, fuse_hybrid(q, r))));
  CHECK_THROWS_AS(fuse_hybrid(a, DisplacementField(make_grid(5, 5, 4))), ArgumentError);
}

TEST_CASE("jacobian_determinant") {
  const Grid g = make_grid(7, 6, 5);
  SUBCASE("zero and translation fields have determinant one") {
    for (const auto& f : {DisplacementField(g), rigid_to_displacement(RigidParams{{0, 0, 0}, {3, -1, 2}, {}}, g)}) {
      const Volume j = jacobian_determinant(f);
      for (std::size_t i = 0; i < j.size(); ++i) REQUIRE(j[i] == 1.0f);
    }
  }
  SUBCASE("affine field has determinant det(A) in the interior") {
    const Mat3 a{{{1.1, 0.2, -0.05}, {0.1, 0.9, 0.3}, {0.0, -0.2, 1.2}}};
    const Volume j = jacobian_determinant(affine_field(g, a, {0.5, 0.0, -1.0}));
    for (int z = 1; z < 4; ++z)
      for (int y = 1; y < 5; ++y)
        for (int x = 1; x < 6; ++x) REQUIRE(std::abs(j(x, y, z) - determinant(a)) <= 1e-5);
  }
  SUBCASE("matches the stencil oracle on random fields, boundaries included") {
    Rng rng(12);
    const auto f = random_field(g, rng, 1.5);
    const Volume j = jacobian_determinant(f);
    for (int z = 0; z < 5; ++z)
      for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 7; ++x) REQUIRE(std::abs(j(x, y, z) - jacobian_oracle(f, x, y, z)) <= 1e-5);
  }
  SUBCASE("rigid fields have unit determinant in the interior") {
    Rng rng(13);
    const Grid big = make_grid(12, 11, 10, {1.0, 1.0, 3.0});
    for (int t = 0; t < 20; ++t) {
      const RigidParams p{random_rotvec(rng, 0.6), {1.5, -2.0, 0.25}, {5.5, 5.0, 4.5}};
      const Volume j = jacobian_determinant(rigid_to_displacement(p, big));
      for (int z = 1; z < 9; ++z)
        for (int y = 1; y < 10; ++y)
          for (int x = 1; x < 11; ++x) REQUIRE(std::abs(j(x, y, z) - 1.0) <= 1e-4);
    }
  }
  CHECK_THROWS_AS(jacobian_determinant(DisplacementField(make_grid(1, 4, 4))), ArgumentError);
}

TEST_CASE("compose_fields") {
  const Grid g = make_grid(12, 12, 12);
  Rng rng(14);
  const auto f = random_field(g, rng, 1.0);
  CHECK(fields_equal(compose_fields(f, DisplacementField(g)), f));

  const auto t1 = rigid_to_displacement(RigidParams{{0, 0, 0}, {0.5, -1.25, 2.0}, {}}, g);
  const auto t2 = rigid_to_displacement(RigidParams{{0, 0, 0}, {-1.5, 0.75, 1.0}, {}}, g);
  const auto tt = compose_fields(t2, t1);
  for (int z = 0; z < 12; ++z)
    for (int y = 2; y < 10; ++y)
      for (int x = 0; x < 12; ++x) REQUIRE(norm(tt.at(x, y, z) - Vec3{-1.0, -0.5, 3.0}) <= 1e-6);

  // Small affine maps about the centre; composition is the matrix product.
  auto small_affine = [&](Mat3& a, Vec3& b) {
    std::uniform_real_distribution<double> u(-0.04, 0.04);
    a = identity3();
    for (auto& row : a)
      for (double& v : row) v += u(rng);
    const Vec3 c{5.5, 5.5, 5.5};
    b = c - a * c + Vec3{u(rng), u(rng), u(rng)};
  };
  for (int t = 0; t < 10; ++t) {
    Mat3 a1, a2;
    Vec3 b1, b2;
    small_affine(a1, b1);
    small_affine(a2, b2);
    const auto c = compose_fields(affine_field(g, a2, b2), affine_field(g, a1, b1));
    const auto expect = affine_field(g, a2 * a1, a2 * b1 + b2);
    for (int z = 2; z < 10; ++z)
      for (int y = 2; y < 10; ++y)
        for (int x = 2; x < 10; ++x) REQUIRE(norm(c.at(x, y, z) - expect.at(x, y, z)) <= 1e-3);
  }
  CHECK_THROWS_AS(compose_fields(f, DisplacementField(make_grid(12, 12, 11))), ArgumentError);
}

TEST_CASE("field files round-trip") {
  TempDir dir("field");
  Rng rng(15);
  const auto f = random_field(make_grid(5, 4, 3, {1.0, 1.0, 3.0}), rng, 4.0);
  save_field(f, dir / "f.nii");
  save_field(f, dir / "f.raw");
  CHECK(fields_equal(load_field(dir / "f.nii"), f));
  CHECK(fields_equal(load_field(dir / "f.raw"), f));
  CHECK(read_file(dir / "f.json").find("\"voxel\"") != std::string::npos);
}

TEST_CASE("overlapping masks are counted") {
  const Grid g = make_grid(4, 1, 1);
  const std::vector masks{LabelVolume(g, {1, 1, 0, 0}), LabelVolume(g, {0, 1, 1, 0})};
  CHECK(count_mask_overlaps(masks) == 1);
}
