#pragma once

#include <span>

#include "hybridreg/field.hpp"
#include "hybridreg/volume.hpp"

namespace hybridreg {

// Trilinear sample of a scalar array laid out on `dims` at continuous voxel
// position p, clamped to [0, n-1] per axis.
double sample_trilinear(std::span<const float> data, const Index3& dims, const Vec3& p);

// Value and spatial gradient of the clamped trilinear interpolant. The
// gradient along an axis is zero where that coordinate is clamped; at an
// interior integer coordinate the right-hand cell is used.
double sample_trilinear_grad(std::span<const float> data, const Index3& dims, const Vec3& p, Vec3& grad);

// Nearest voxel per axis, rounding half up, clamped to the grid.
Index3 nearest_index(const Index3& dims, const Vec3& p);

// I_warp(x) = I(x + u(x)), trilinear, clamped at borders.
Volume warp_scalar(const Volume& v, const DisplacementField& f);
// Nearest-neighbour warp for label maps; output ids are a subset of input ids.
LabelVolume warp_labels(const LabelVolume& labels, const DisplacementField& f);

// Resamples `v` (on any grid) through the affine map x -> A x + b applied to
// voxel coordinates of `out_grid`; used as an independent route to check rigid
// warps.
Volume resample_affine(const Volume& v, const Mat3& a, const Vec3& b, const Grid& out_grid);

}  // namespace hybridreg
