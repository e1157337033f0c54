#include "hybridreg/field.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "hybridreg/parallel.hpp"
#include "hybridreg/resample.hpp"

namespace hybridreg {

Mat3 rotvec_to_matrix(const Vec3& r) {
  const double theta = norm(r);
  Mat3 m = identity3();
  if (theta < 1e-12) {
    // First order is exact to double precision at this magnitude.
    m[0][1] = -r[2];
    m[0][2] = r[1];
    m[1][0] = r[2];
    m[1][2] = -r[0];
    m[2][0] = -r[1];
    m[2][1] = r[0];
    return m;
  }
  const Vec3 k = (1.0 / theta) * r;
  const double s = std::sin(theta), c = 1.0 - std::cos(theta);
  const Mat3 kx{{{0, -k[2], k[1]}, {k[2], 0, -k[0]}, {-k[1], k[0], 0}}};
  const Mat3 kx2 = kx * kx;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m[i][j] += s * kx[i][j] + c * kx2[i][j];
  return m;
}

Vec3 matrix_to_rotvec(const Mat3& m) {
  const double tr = m[0][0] + m[1][1] + m[2][2];
  const double cos_t = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  const double theta = std::acos(cos_t);
  const Vec3 w{m[2][1] - m[1][2], m[0][2] - m[2][0], m[1][0] - m[0][1]};
  if (theta < 1e-6) return 0.5 * w;
  if (std::numbers::pi - theta < 1e-4) {
    // Near a half turn the skew part vanishes; recover the axis from the
    // symmetric part R + I = 2 k k^T + (1 - cos) terms.
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (m[i][i] > m[best][best]) best = i;
    Vec3 k{};
    k[best] = std::sqrt(std::max(0.0, (m[best][best] - cos_t) / (1.0 - cos_t)));
    for (int i = 0; i < 3; ++i)
      if (i != best) k[i] = (m[best][i] + m[i][best]) / (2.0 * (1.0 - cos_t) * k[best]);
    if (dot(k, w) < 0) k = -k;
    return theta * (1.0 / norm(k)) * k;
  }
  return (theta / (2.0 * std::sin(theta))) * w;
}

Mat3 RigidParams::matrix() const { return rotvec_to_matrix(rotation); }

Vec3 RigidParams::apply(const Vec3& x) const { return matrix() * (x - center) + center + translation; }

bool RigidParams::is_identity() const {
  return rotation == Vec3{0, 0, 0} && translation == Vec3{0, 0, 0};
}

void RigidParams::validate() const {
  for (int a = 0; a < 3; ++a)
    if (!std::isfinite(rotation[a]) || !std::isfinite(translation[a]) || !std::isfinite(center[a]))
      throw ArgumentError("rigid parameters must be finite");
  if (norm(rotation) >= std::numbers::pi + 1e-6) throw ArgumentError("rotation vector magnitude must be < pi");
}

RigidParams RigidParams::recentered(const Vec3& new_center) const {
  RigidParams out = *this;
  out.center = new_center;
  out.translation = matrix() * (new_center - center) + center + translation - new_center;
  return out;
}

DisplacementField::DisplacementField(Grid grid)
    : grid_(grid), ux_(grid.voxel_count(), 0.0f), uy_(grid.voxel_count(), 0.0f), uz_(grid.voxel_count(), 0.0f) {
  grid_.validate();
}

DisplacementField::DisplacementField(Grid grid, std::vector<float> ux, std::vector<float> uy, std::vector<float> uz)
    : grid_(grid), ux_(std::move(ux)), uy_(std::move(uy)), uz_(std::move(uz)) {
  grid_.validate();
  const std::size_t n = grid_.voxel_count();
  if (ux_.size() != n || uy_.size() != n || uz_.size() != n)
    throw ArgumentError("displacement channels do not match grid");
}

std::span<const float> DisplacementField::channel(int c) const {
  switch (c) {
    case 0: return ux_;
    case 1: return uy_;
    case 2: return uz_;
  }
  throw ArgumentError("displacement channel index out of range");
}

std::span<float> DisplacementField::channel(int c) {
  switch (c) {
    case 0: return ux_;
    case 1: return uy_;
    case 2: return uz_;
  }
  throw ArgumentError("displacement channel index out of range");
}

void DisplacementField::require_finite() const {
  for (int c = 0; c < 3; ++c) {
    const auto ch = channel(c);
    for (std::size_t i = 0; i < ch.size(); ++i)
      if (!std::isfinite(ch[i]))
        throw DataError("displacement field has a non-finite value at voxel " + std::to_string(i));
  }
}

DisplacementField rigid_to_displacement(const RigidParams& p, const Grid& grid) {
  p.validate();
  DisplacementField f(grid);
  const Mat3 r = p.matrix();
  parallel_for(0, grid.dims[2], [&](std::int64_t zz) {
    const int z = static_cast<int>(zz);
    for (int y = 0; y < grid.dims[1]; ++y)
      for (int x = 0; x < grid.dims[0]; ++x) {
        const Vec3 pos{double(x), double(y), double(z)};
        const Vec3 mapped = r * (pos - p.center) + p.center + p.translation;
        f.set(grid.index(x, y, z), mapped - pos);
      }
  });
  return f;
}

DisplacementField mask_field(const DisplacementField& f, const LabelVolume& mask) {
  require_same_geometry(f.grid(), mask.grid(), "mask_field");
  DisplacementField out(f.grid());
  for (std::size_t i = 0; i < f.size(); ++i)
    if (mask[i] != 0) out.set(i, f.at(i));
  return out;
}

DisplacementField sum_fields(std::span<const DisplacementField> fields) {
  if (fields.empty()) throw ArgumentError("sum_fields: empty list");
  DisplacementField out(fields.front().grid());
  for (const auto& f : fields) {
    require_same_geometry(out.grid(), f.grid(), "sum_fields");
    for (int c = 0; c < 3; ++c) {
      auto dst = out.channel(c);
      const auto src = f.channel(c);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  return out;
}

DisplacementField fuse_hybrid(const DisplacementField& def_field, const DisplacementField& rigid_field) {
  require_same_geometry(def_field.grid(), rigid_field.grid(), "fuse_hybrid");
  DisplacementField out(def_field.grid());
  for (int c = 0; c < 3; ++c) {
    auto dst = out.channel(c);
    const auto a = def_field.channel(c);
    const auto b = rigid_field.channel(c);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = a[i] + b[i];
  }
  return out;
}

DisplacementField negate(const DisplacementField& f) {
  DisplacementField out(f.grid());
  for (int c = 0; c < 3; ++c) {
    auto dst = out.channel(c);
    const auto src = f.channel(c);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = -src[i];
  }
  return out;
}

Volume jacobian_determinant(const DisplacementField& f) {
  const Grid& g = f.grid();
  for (int a = 0; a < 3; ++a)
    if (g.dims[a] < 2) throw ArgumentError("jacobian_determinant requires dims >= 2 on every axis");
  std::vector<float> out(g.voxel_count());
  parallel_for(0, g.dims[2], [&](std::int64_t zz) {
    const int z = static_cast<int>(zz);
    for (int y = 0; y < g.dims[1]; ++y)
      for (int x = 0; x < g.dims[0]; ++x) {
        const Index3 p{x, y, z};
        Mat3 j = identity3();
        for (int a = 0; a < 3; ++a) {
          Index3 lo = p, hi = p;
          double h = 2.0;
          if (p[a] == 0) {
            hi[a] += 1;
            h = 1.0;
          } else if (p[a] == g.dims[a] - 1) {
            lo[a] -= 1;
            h = 1.0;
          } else {
            lo[a] -= 1;
            hi[a] += 1;
          }
          const Vec3 uh = f.at(hi[0], hi[1], hi[2]);
          const Vec3 ul = f.at(lo[0], lo[1], lo[2]);
          for (int c = 0; c < 3; ++c) j[c][a] += (uh[c] - ul[c]) / h;
        }
        out[g.index(x, y, z)] = static_cast<float>(determinant(j));
      }
  });
  return Volume(g, std::move(out));
}

DisplacementField compose_fields(const DisplacementField& outer, const DisplacementField& inner) {
  require_same_geometry(outer.grid(), inner.grid(), "compose_fields");
  const Grid& g = inner.grid();
  DisplacementField out(g);
  parallel_for(0, g.dims[2], [&](std::int64_t zz) {
    const int z = static_cast<int>(zz);
    for (int y = 0; y < g.dims[1]; ++y)
      for (int x = 0; x < g.dims[0]; ++x) {
        const std::size_t i = g.index(x, y, z);
        const Vec3 ui = inner.at(i);
        const Vec3 p{x + ui[0], y + ui[1], z + ui[2]};
        Vec3 uo;
        for (int c = 0; c < 3; ++c) uo[c] = sample_trilinear(outer.channel(c), g.dims, p);
        out.set(i, ui + uo);
      }
  });
  return out;
}

std::size_t count_mask_overlaps(std::span<const LabelVolume> masks) {
  if (masks.empty()) return 0;
  const std::size_t n = masks.front().size();
  std::size_t overlaps = 0;
  for (std::size_t i = 0; i < n; ++i) {
    int hits = 0;
    for (const auto& m : masks) {
      require_same_geometry(masks.front().grid(), m.grid(), "count_mask_overlaps");
      if (m[i] != 0) ++hits;
    }
    if (hits > 1) ++overlaps;
  }
  return overlaps;
}

}  // namespace hybridreg
