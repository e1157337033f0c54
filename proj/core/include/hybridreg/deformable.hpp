#pragma once

#include <vector>

#include "hybridreg/field.hpp"
#include "hybridreg/mind.hpp"

namespace hybridreg {

// Coarse 3-channel grid of control displacements (voxel units). Control point
// k sits at voxel coordinate k * spacing_vox along each axis; values are
// stored channel-major, x fastest within a channel.
struct ControlGrid {
  Index3 cdims{2, 2, 2};
  Vec3 spacing_vox{4.0, 4.0, 4.0};
  std::vector<double> values;

  std::size_t point_count() const {
    return static_cast<std::size_t>(cdims[0]) * static_cast<std::size_t>(cdims[1]) *
           static_cast<std::size_t>(cdims[2]);
  }
  std::size_t index(int c, int i, int j, int k) const {
    return static_cast<std::size_t>(c) * point_count() + static_cast<std::size_t>(i) +
           static_cast<std::size_t>(cdims[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(cdims[1]) * static_cast<std::size_t>(k));
  }

  // Smallest zero-valued grid with the given spacing whose extent covers the
  // image grid.
  static ControlGrid covering(const Grid& grid, double spacing_vox);
  // Grid with exactly `cdims` points spread so the last point lands on the
  // last voxel of each axis.
  static ControlGrid spanning(const Grid& grid, const Index3& cdims);

  // Throws ArgumentError unless cdims >= 2 and the extent covers `grid`.
  void validate_covers(const Grid& grid) const;
};

// Trilinear upsampling of control values to every voxel. Exact at control
// points.
DisplacementField upsample_grid(const ControlGrid& g, const Grid& grid);

// Which field the smoothness term sees.
enum class SmoothTarget { kDeformable, kHybrid };

struct ObjectiveTerms {
  double similarity = 0.0;
  double smoothness = 0.0;
  double total = 0.0;
};

// L = mind_ssd(d_fixed, d_moving o (upsample(g) + rigid)) + lambda * L_smooth,
// evaluated in double precision without materialising a float field.
ObjectiveTerms objective_terms(const DescriptorVolume& fixed, const DescriptorVolume& moving, const ControlGrid& g,
                               const DisplacementField& rigid_field, double lambda,
                               SmoothTarget target = SmoothTarget::kDeformable);
double objective(const DescriptorVolume& fixed, const DescriptorVolume& moving, const ControlGrid& g,
                 const DisplacementField& rigid_field, double lambda, SmoothTarget target = SmoothTarget::kDeformable);

// Exact gradient of `objective` w.r.t. g.values (same layout). The similarity
// part goes through the spatial gradient of the trilinear interpolant of the
// moving descriptors; the smoothness part through the adjoint of the
// forward-difference stencil; both are pulled back to control points with
// the upsampling weights.
std::vector<double> objective_gradient(const DescriptorVolume& fixed, const DescriptorVolume& moving,
                                       const ControlGrid& g, const DisplacementField& rigid_field, double lambda,
                                       SmoothTarget target = SmoothTarget::kDeformable);

struct DeformableOptions {
  double lambda = 0.2;
  double step_size = 0.1;  // Adam learning rate, voxels
  int max_iters = 200;
  double grid_spacing_vox = 4.0;
  double grad_tol = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  SmoothTarget smooth_target = SmoothTarget::kDeformable;

  void validate() const;
};

struct DeformableResult {
  ControlGrid grid;
  DisplacementField field;
  std::vector<double> loss_trace;  // loss at the iterate evaluated in each iteration
  std::vector<double> best_trace;  // best-so-far loss, non-increasing
  int iterations = 0;
  bool converged = false;  // stopped on the gradient tolerance
};

// Adam descent on the control values from zero; returns the best control grid
// seen. Throws NumericalError naming the iteration if
// the loss becomes non-finite.
DeformableResult optimize_deformable(const DescriptorVolume& fixed, const DescriptorVolume& moving,
                                     const DisplacementField& rigid_field, const DeformableOptions& opts);

}  // namespace hybridreg
