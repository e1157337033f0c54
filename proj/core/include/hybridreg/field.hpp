#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "hybridreg/linalg.hpp"
#include "hybridreg/volume.hpp"

namespace hybridreg {

// Rotation vector r (axis * angle, radians), translation t and rotation centre
// c, all in voxel units of the fixed grid. The induced map is
//   x -> R(r) (x - c) + c + t.
struct RigidParams {
  Vec3 rotation{0.0, 0.0, 0.0};
  Vec3 translation{0.0, 0.0, 0.0};
  Vec3 center{0.0, 0.0, 0.0};

  Mat3 matrix() const;
  Vec3 apply(const Vec3& x) const;
  bool is_identity() const;
  // Throws ArgumentError on non-finite components or |r| >= pi + 1e-6.
  void validate() const;

  // Same transform expressed about another centre.
  RigidParams recentered(const Vec3& new_center) const;

  friend bool operator==(const RigidParams&, const RigidParams&) = default;
};

// Rodrigues map from a rotation vector to an SO(3) matrix.
Mat3 rotvec_to_matrix(const Vec3& r);
// Inverse map, returning |r| in [0, pi].
Vec3 matrix_to_rotvec(const Mat3& m);

// Per-voxel displacement u(x) in voxel units; the transform is x -> x + u(x).
class DisplacementField {
 public:
  DisplacementField() = default;
  explicit DisplacementField(Grid grid);
  DisplacementField(Grid grid, std::vector<float> ux, std::vector<float> uy, std::vector<float> uz);

  const Grid& grid() const { return grid_; }
  const Index3& dims() const { return grid_.dims; }
  std::size_t size() const { return ux_.size(); }

  std::span<const float> channel(int c) const;
  std::span<float> channel(int c);

  Vec3 at(std::size_t i) const { return {ux_[i], uy_[i], uz_[i]}; }
  Vec3 at(int x, int y, int z) const { return at(grid_.index(x, y, z)); }
  void set(std::size_t i, const Vec3& u) {
    ux_[i] = static_cast<float>(u[0]);
    uy_[i] = static_cast<float>(u[1]);
    uz_[i] = static_cast<float>(u[2]);
  }

  // Throws DataError on NaN/inf.
  void require_finite() const;
  // Displacement magnitudes converted to mm using the grid spacing.
  Vec3 to_mm(std::size_t i) const {
    const Vec3 u = at(i);
    return {u[0] * grid_.spacing[0], u[1] * grid_.spacing[1], u[2] * grid_.spacing[2]};
  }

 private:
  Grid grid_{};
  std::vector<float> ux_, uy_, uz_;
};

DisplacementField rigid_to_displacement(const RigidParams& p, const Grid& grid);

// phi~ = M * phi: field kept where mask != 0, zero elsewhere.
DisplacementField mask_field(const DisplacementField& f, const LabelVolume& mask);

// Voxelwise sum, accumulated in list order. Throws ArgumentError for an empty
// list or mismatched grids.
DisplacementField sum_fields(std::span<const DisplacementField> fields);

// Additive hybrid fusion: displacement parts add, the identity counts once.
DisplacementField fuse_hybrid(const DisplacementField& def_field, const DisplacementField& rigid_field);

// Negation, used to build cancellation checks and inverse translations.
DisplacementField negate(const DisplacementField& f);

// det(I + du/dx) per voxel in voxel units; central differences in the
// interior, one-sided differences on the first/last slice of each axis.
// Requires dims >= 2 on every axis.
Volume jacobian_determinant(const DisplacementField& f);

// (outer o inner)(x) - x = u_in(x) + u_out(x + u_in(x)), with u_out sampled
// trilinearly and clamped to the grid.
DisplacementField compose_fields(const DisplacementField& outer, const DisplacementField& inner);

// Number of voxels covered by more than one mask; masks split from a single
// label map never overlap.
std::size_t count_mask_overlaps(std::span<const LabelVolume> masks);

// Field files: `.nii` stores a 5D float32 NIfTI (dim[5] = 3, vector intent);
// `.raw`/`.json` stores the three channels back to back with a sidecar
// tagged `"units": "voxel"`.
void save_field(const DisplacementField& f, const std::filesystem::path& path);
DisplacementField load_field(const std::filesystem::path& path);

}  // namespace hybridreg
