#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hybridreg/field.hpp"
#include "hybridreg/volume.hpp"

namespace hybridreg {

// Synthetic articulated phantom: a column of box-shaped "vertebrae" with a
// posterior notch, stacked along y and embedded in soft tissue with dense
// blobs. Only two intensity levels exist (tissue, and bone = dense tissue).
// Each vertebra moves rigidly. Tissue within 3 voxels of a vertebra follows
// the normal component of its motion and slides along it, blending into a
// smooth sinusoidal field further out; the background part is zero on the
// vertebrae.
struct PhantomSpec {
  Index3 dims{64, 64, 48};
  int n_vertebrae = 4;
  int vertebra_size = 26;       // lateral (x) extent; depth is 3/4 of it
  int vertebra_height = 9;      // extent along the stacking axis
  int gap = 8;
  double max_rot_deg = 5.0;
  double max_trans_vox = 2.0;
  double bg_field_amp_vox = 1.0;
  double bg_field_period_vox = 32.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct PhantomPair {
  Volume fixed;
  Volume moving;
  LabelVolume fixed_labels;
  LabelVolume moving_labels;
  std::vector<RigidParams> gt_rigids;  // index i belongs to label i+1
  DisplacementField gt_bg_field;
};

// Analytic model behind a phantom, exposed so tests can evaluate ground truth
// pointwise.
class PhantomModel {
 public:
  explicit PhantomModel(const PhantomSpec& spec);

  const PhantomSpec& spec() const { return spec_; }
  int vertebra_count() const { return spec_.n_vertebrae; }

  // Solid part of vertebra i (0-based) in fixed voxel coordinates.
  bool in_vertebra(int i, const Vec3& x) const;
  // Label (1-based) at a fixed-space position, 0 for tissue.
  Label label_at(const Vec3& x) const;
  // Underlying tissue class intensity in [0, 1] before modality remapping.
  double base_intensity(const Vec3& x) const;
  // Tissue displacement at a fixed-space position outside the vertebrae.
  Vec3 background_displacement(const Vec3& x) const;
  // Distance (voxels) from x to the nearest vertebra solid, 0 inside.
  double distance_to_vertebrae(const Vec3& x) const;

  const std::vector<RigidParams>& rigids() const { return rigids_; }

  // Fixed-space position that maps onto moving-space position y through the
  // background field.
  Vec3 invert_background(const Vec3& y) const { return invert_background(y, y); }
  Vec3 invert_background(const Vec3& y, const Vec3& guess) const;

 private:
  struct BoxShape {
    Vec3 lo, hi;          // solid box
    Vec3 notch_lo, notch_hi;
    std::array<std::array<Vec3, 2>, 3> parts;  // solid as a union of boxes
  };

  void sample_motions(const std::vector<Vec3>& centroids);
  // Distance to the solid of vertebra i and the closest solid point.
  double box_distance(std::size_t i, const Vec3& x, Vec3* closest = nullptr) const;

  PhantomSpec spec_;
  std::vector<BoxShape> boxes_;
  std::vector<RigidParams> rigids_;
  std::vector<Mat3> rot_;
  Vec3 bg_phase_a_{}, bg_phase_b_{};
  Vec3 tex_phase_{};
  double tex_period_ = 14.0;

  friend PhantomPair make_phantom(const PhantomSpec& spec);
};

// Fixed image intensity: 800 * I - 100. Moving image: 500 * (1 - exp(-3 I)),
// a nonlinear monotone remap. Voxels straddling a tissue boundary hold the
// mean of the remapped intensity over a 4x4x4 subsample lattice (partial
// volume), so sub-voxel motion is visible in the images. Independent Gaussian noise of noise_sigma (in
// units of the underlying [0,1] scale) is added per modality.
PhantomPair make_phantom(const PhantomSpec& spec);

// Ground truth in the hybrid decomposition: build_rigid_field(gt_rigids,
// fixed_labels) fused with the background field.
DisplacementField gt_hybrid_field(const PhantomPair& pair);

// Remaps used for the two pseudo-modalities.
double fixed_modality(double base);
double moving_modality(double base);

}  // namespace hybridreg
