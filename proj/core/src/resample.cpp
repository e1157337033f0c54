#include "hybridreg/resample.hpp"

#include <cmath>
#include <string>

#include "hybridreg/parallel.hpp"

namespace hybridreg {

namespace {

struct AxisCell {
  int i0 = 0;
  int i1 = 0;
  double frac = 0.0;
  bool clamped = false;
};

inline AxisCell axis_cell(double p, int n) {
  AxisCell c;
  if (n <= 1) {
    c.clamped = true;
    return c;
  }
  const double hi = static_cast<double>(n - 1);
  if (p < 0.0) {
    p = 0.0;
    c.clamped = true;
  } else if (p > hi) {
    p = hi;
    c.clamped = true;
  }
  int i0 = static_cast<int>(std::floor(p));
  if (i0 >= n - 1) i0 = n - 2;
  c.i0 = i0;
  c.i1 = i0 + 1;
  c.frac = p - i0;
  return c;
}

}  // namespace

double sample_trilinear(std::span<const float> data, const Index3& dims, const Vec3& p) {
  const AxisCell cx = axis_cell(p[0], dims[0]);
  const AxisCell cy = axis_cell(p[1], dims[1]);
  const AxisCell cz = axis_cell(p[2], dims[2]);
  const std::size_t nx = static_cast<std::size_t>(dims[0]);
  const std::size_t nxy = nx * static_cast<std::size_t>(dims[1]);
  auto at = [&](int x, int y, int z) {
    return static_cast<double>(data[static_cast<std::size_t>(x) + nx * static_cast<std::size_t>(y) +
                                    nxy * static_cast<std::size_t>(z)]);
  };
  const double fx = cx.frac, fy = cy.frac, fz = cz.frac;
  const double c00 = at(cx.i0, cy.i0, cz.i0) * (1 - fx) + at(cx.i1, cy.i0, cz.i0) * fx;
  const double c10 = at(cx.i0, cy.i1, cz.i0) * (1 - fx) + at(cx.i1, cy.i1, cz.i0) * fx;
  const double c01 = at(cx.i0, cy.i0, cz.i1) * (1 - fx) + at(cx.i1, cy.i0, cz.i1) * fx;
  const double c11 = at(cx.i0, cy.i1, cz.i1) * (1 - fx) + at(cx.i1, cy.i1, cz.i1) * fx;
  const double c0 = c00 * (1 - fy) + c10 * fy;
  const double c1 = c01 * (1 - fy) + c11 * fy;
  return c0 * (1 - fz) + c1 * fz;
}

double sample_trilinear_grad(std::span<const float> data, const Index3& dims, const Vec3& p, Vec3& grad) {
  const AxisCell cx = axis_cell(p[0], dims[0]);
  const AxisCell cy = axis_cell(p[1], dims[1]);
  const AxisCell cz = axis_cell(p[2], dims[2]);
  const std::size_t nx = static_cast<std::size_t>(dims[0]);
  const std::size_t nxy = nx * static_cast<std::size_t>(dims[1]);
  auto at = [&](int x, int y, int z) {
    return static_cast<double>(data[static_cast<std::size_t>(x) + nx * static_cast<std::size_t>(y) +
                                    nxy * static_cast<std::size_t>(z)]);
  };
  const double v000 = at(cx.i0, cy.i0, cz.i0), v100 = at(cx.i1, cy.i0, cz.i0);
  const double v010 = at(cx.i0, cy.i1, cz.i0), v110 = at(cx.i1, cy.i1, cz.i0);
  const double v001 = at(cx.i0, cy.i0, cz.i1), v101 = at(cx.i1, cy.i0, cz.i1);
  const double v011 = at(cx.i0, cy.i1, cz.i1), v111 = at(cx.i1, cy.i1, cz.i1);
  const double fx = cx.frac, fy = cy.frac, fz = cz.frac;

  const double c00 = v000 * (1 - fx) + v100 * fx;
  const double c10 = v010 * (1 - fx) + v110 * fx;
  const double c01 = v001 * (1 - fx) + v101 * fx;
  const double c11 = v011 * (1 - fx) + v111 * fx;
  const double c0 = c00 * (1 - fy) + c10 * fy;
  const double c1 = c01 * (1 - fy) + c11 * fy;

  if (cx.clamped) {
    grad[0] = 0.0;
  } else {
    const double d00 = v100 - v000, d10 = v110 - v010, d01 = v101 - v001, d11 = v111 - v011;
    grad[0] = ((d00 * (1 - fy) + d10 * fy) * (1 - fz) + (d01 * (1 - fy) + d11 * fy) * fz);
  }
  grad[1] = cy.clamped ? 0.0 : ((c10 - c00) * (1 - fz) + (c11 - c01) * fz);
  grad[2] = cz.clamped ? 0.0 : (c1 - c0);
  return c0 * (1 - fz) + c1 * fz;
}

Index3 nearest_index(const Index3& dims, const Vec3& p) {
  Index3 q;
  for (int a = 0; a < 3; ++a) {
    int i = static_cast<int>(std::floor(p[a] + 0.5));
    if (i < 0) i = 0;
    if (i > dims[a] - 1) i = dims[a] - 1;
    q[a] = i;
  }
  return q;
}

namespace {
void require_finite_field(const DisplacementField& f) {
  try {
    f.require_finite();
  } catch (const DataError& e) {
    throw DataError(std::string("warp: ") + e.what());
  }
}
}  // namespace

Volume warp_scalar(const Volume& v, const DisplacementField& f) {
  require_same_geometry(v.grid(), f.grid(), "warp_scalar");
  require_finite_field(f);
  const Grid& g = v.grid();
  std::vector<float> out(g.voxel_count());
  parallel_for(0, g.dims[2], [&](std::int64_t zz) {
    const int z = static_cast<int>(zz);
    for (int y = 0; y < g.dims[1]; ++y)
      for (int x = 0; x < g.dims[0]; ++x) {
        const std::size_t i = g.index(x, y, z);
        const Vec3 u = f.at(i);
        out[i] = static_cast<float>(sample_trilinear(v.data(), g.dims, Vec3{x + u[0], y + u[1], z + u[2]}));
      }
  });
  return Volume(g, std::move(out));
}

LabelVolume warp_labels(const LabelVolume& labels, const DisplacementField& f) {
  require_same_geometry(labels.grid(), f.grid(), "warp_labels");
  require_finite_field(f);
  const Grid& g = labels.grid();
  std::vector<Label> out(g.voxel_count());
  parallel_for(0, g.dims[2], [&](std::int64_t zz) {
    const int z = static_cast<int>(zz);
    for (int y = 0; y < g.dims[1]; ++y)
      for (int x = 0; x < g.dims[0]; ++x) {
        const std::size_t i = g.index(x, y, z);
        const Vec3 u = f.at(i);
        const Index3 q = nearest_index(g.dims, Vec3{x + u[0], y + u[1], z + u[2]});
        out[i] = labels(q[0], q[1], q[2]);
      }
  });
  return LabelVolume(g, std::move(out));
}

Volume resample_affine(const Volume& v, const Mat3& a, const Vec3& b, const Grid& out_grid) {
  out_grid.validate();
  std::vector<float> out(out_grid.voxel_count());
  for (int z = 0; z < out_grid.dims[2]; ++z)
    for (int y = 0; y < out_grid.dims[1]; ++y)
      for (int x = 0; x < out_grid.dims[0]; ++x) {
        const Vec3 p = a * Vec3{double(x), double(y), double(z)} + b;
        out[out_grid.index(x, y, z)] = static_cast<float>(sample_trilinear(v.data(), v.dims(), p));
      }
  return Volume(out_grid, std::move(out));
}

}  // namespace hybridreg
