#pragma once

#include <utility>

#include "hybridreg/volume.hpp"

namespace hybridreg {

// Half-open voxel box [lo, hi).
struct Box {
  Index3 lo{0, 0, 0};
  Index3 hi{0, 0, 0};

  Index3 extent() const { return {hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]}; }
  friend bool operator==(const Box&, const Box&) = default;
};

// Exact sub-block [lo, hi); the origin moves by lo * spacing. Throws
// ArgumentError for empty or out-of-range boxes.
Volume crop(const Volume& v, const Box& box);
LabelVolume crop(const LabelVolume& v, const Box& box);

// Tightest box around voxels equal to `id`, dilated by `margin` and clamped to
// the grid. Throws NotFoundError when the id is absent.
Box label_bounding_box(const LabelVolume& labels, Label id, int margin);
// Same, for every nonzero voxel of a mask.
Box mask_bounding_box(const LabelVolume& mask, int margin);

// Resampling to new dims with the physical extent preserved: output voxel j
// samples input coordinate (j + 0.5) * n_in / n_out - 0.5 (clamped), so the
// spacing becomes spacing * n_in / n_out and voxel centres stay centred.
Volume resize_trilinear(const Volume& v, const Index3& target_dims);
// Nearest-neighbour counterpart for label maps; never introduces new ids.
LabelVolume resize_nearest(const LabelVolume& labels, const Index3& target_dims);

// Min-max rescale to [0, 1]; a constant volume maps to all zeros.
Volume normalize_minmax(const Volume& v);

}  // namespace hybridreg
