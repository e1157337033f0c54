#pragma once

#include <vector>

#include "hybridreg/field.hpp"
#include "hybridreg/mind.hpp"
#include "hybridreg/preprocess.hpp"

namespace hybridreg {

// Coordinate-descent schedule for the 6-DOF search. Each sweep tries +step
// and -step on every parameter in order (rx, ry, rz, tx, ty, tz) and keeps
// any improvement; a sweep with no improvement multiplies both steps by
// shrink_factor. The search stops when the translation step falls below tol,
// when the loss reaches zero, or after max_iters sweeps.
struct RigidEstimateOptions {
  int max_iters = 200;
  double init_step_rot = 0.07;    // radians (about 4 degrees)
  double init_step_trans = 2.0;   // voxels
  double shrink_factor = 0.5;
  double tol = 0.01;
  int roi_margin = 2;

  void validate() const;
};

struct PerLabelRigid {
  Label label_id = 0;
  RigidParams params{};
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int iterations_used = 0;
  bool translation_only = false;  // mask too small for rotation
  bool degenerate = false;        // flat descriptors inside the ROI
  std::vector<double> loss_trace;  // loss after every accepted step, starting at the initial loss
};

// Step 1: binary mask of one label. Throws NotFoundError for unknown ids.
LabelVolume select_label(const LabelVolume& labels, Label id);

struct RoiBlock {
  DescriptorVolume descriptors;  // cropped to the box
  LabelVolume mask;              // cropped mask
  Index3 offset{0, 0, 0};        // position of the block's voxel (0,0,0) in the full grid
};

// Step 2: crop the descriptor volume to the mask's bounding box dilated by
// `margin`. Throws DegenerateInputError on an empty mask.
RoiBlock extract_roi(const DescriptorVolume& d, const LabelVolume& mask, int margin);

// Step 3: minimise the masked descriptor SSD inside the ROI (the mask's
// bounding box dilated by roi_margin) between the fixed descriptors and the
// moving descriptors sampled at R (x - c) + c + t, with c the mask centroid.
// Deterministic; the result never scores worse than the identity.
PerLabelRigid estimate_rigid(const DescriptorVolume& fixed, const DescriptorVolume& moving, const LabelVolume& mask,
                             const RigidEstimateOptions& opts, Label label_id = 1);

// Loss that estimate_rigid minimises: mean over the ROI voxels where `mask` is
// nonzero (all ROI voxels when mask is null) and over channels.
double rigid_roi_loss(const DescriptorVolume& fixed, const DescriptorVolume& moving, const Box& roi,
                      const RigidParams& p, const LabelVolume* mask = nullptr);

// Step 4: sum over labels of M_i * (rigid displacement of estimate i). Zero on
// background. Throws ArgumentError on duplicate ids or ids absent from labels.
DisplacementField build_rigid_field(std::span<const PerLabelRigid> estimates, const LabelVolume& labels);

// Global rigid pre-registration: estimate_rigid with a mask covering the
// whole grid, so tissue and bone weigh in alike.
PerLabelRigid global_prereg(const DescriptorVolume& fixed, const DescriptorVolume& moving,
                            const RigidEstimateOptions& opts);

// Image-level overload: computes MIND descriptors of both volumes first.
PerLabelRigid global_prereg(const Volume& fixed, const Volume& moving, const RigidEstimateOptions& opts);

// Per-label estimates in ascending id order.
std::vector<PerLabelRigid> estimate_all_labels(const DescriptorVolume& fixed, const DescriptorVolume& moving,
                                               const LabelVolume& labels, const RigidEstimateOptions& opts);

}  // namespace hybridreg
