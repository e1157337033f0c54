#pragma once

#include <vector>

#include "hybridreg/field.hpp"
#include "hybridreg/volume.hpp"

namespace hybridreg {

struct DiceResult {
  double value = 0.0;
  bool both_empty = false;  // 1.0 reported by convention
};

// 2|A n B| / (|A| + |B|) for voxels equal to `id` in each map.
DiceResult dice(const LabelVolume& fixed_labels, const LabelVolume& warped_labels, Label id);

struct LabelScore {
  Label id = 0;
  double value = 0.0;
};

struct DiceSummary {
  std::vector<LabelScore> per_label;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

// Dice over ids present in both maps. Throws NotFoundError when none are shared.
DiceSummary mean_dice(const LabelVolume& fixed_labels, const LabelVolume& warped_labels);

// Boundary voxels: mask voxels with at least one 6-neighbour outside the mask
// (positions outside the grid count as outside).
std::vector<Index3> boundary_voxels(const LabelVolume& mask);

// Symmetric 95th-percentile boundary distance in mm. Directed nearest-boundary
// distances from both sides are pooled and the nearest-rank percentile is
// taken: sorted[ceil(0.95 n) - 1]. Throws DegenerateInputError on an empty
// mask. Masks are nonzero sets.
double hd95(const LabelVolume& mask_a, const LabelVolume& mask_b, const Vec3& spacing);

struct Hd95Summary {
  std::vector<LabelScore> per_label;
  double mean = 0.0;
};

// Per-label HD95 over ids present in both maps; labels empty on either side
// are skipped.
Hd95Summary hd95_per_label(const LabelVolume& fixed_labels, const LabelVolume& warped_labels);

// 100 * |{x in fg : det J(x) < 0}| / |fg|. Throws DegenerateInputError on an
// empty foreground.
double neg_jacobian_pct(const DisplacementField& field, const LabelVolume& fg_mask);

// Foreground used for the folding metric: union of nonzero labels dilated by
// two voxels (box neighbourhood).
LabelVolume jacobian_foreground(const LabelVolume& labels);

}  // namespace hybridreg
