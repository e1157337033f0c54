#include "hybridreg/rigid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>

#include "hybridreg/parallel.hpp"
#include "stencil.hpp"

namespace hybridreg {

void RigidEstimateOptions::validate() const {
  if (max_iters < 1) throw ArgumentError("rigid max_iters must be >= 1");
  if (!(init_step_rot > 0.0) || !(init_step_trans > 0.0)) throw ArgumentError("rigid initial steps must be positive");
  if (!(shrink_factor > 0.0 && shrink_factor < 1.0)) throw ArgumentError("rigid shrink_factor must be in (0, 1)");
  if (!(tol >= 0.0)) throw ArgumentError("rigid tol must be >= 0");
  if (roi_margin < 0) throw ArgumentError("rigid roi_margin must be >= 0");
}

LabelVolume select_label(const LabelVolume& labels, Label id) {
  if (id == 0 || !labels.has_label(id)) throw NotFoundError("label " + std::to_string(id) + " not present");
  return binary_mask(labels, id);
}

RoiBlock extract_roi(const DescriptorVolume& d, const LabelVolume& mask, int margin) {
  require_same_geometry(d.grid(), mask.grid(), "extract_roi");
  const Box box = mask_bounding_box(mask, margin);
  RoiBlock roi;
  roi.offset = box.lo;
  roi.mask = crop(mask, box);
  roi.descriptors = DescriptorVolume(roi.mask.grid(), d.channels());
  const Grid& g = d.grid();
  const Grid& rg = roi.mask.grid();
  for (int k = 0; k < d.channels(); ++k) {
    const auto src = d.channel(k);
    auto dst = roi.descriptors.channel(k);
    for (int z = 0; z < rg.dims[2]; ++z)
      for (int y = 0; y < rg.dims[1]; ++y)
        for (int x = 0; x < rg.dims[0]; ++x)
          dst[rg.index(x, y, z)] = src[g.index(x + box.lo[0], y + box.lo[1], z + box.lo[2])];
  }
  return roi;
}

namespace {

// Voxels of the ROI box that enter the loss: the mask voxels, or the whole box.
std::vector<std::size_t> roi_voxels(const Grid& g, const Box& roi, const LabelVolume* mask) {
  std::vector<std::size_t> out;
  for (int z = roi.lo[2]; z < roi.hi[2]; ++z)
    for (int y = roi.lo[1]; y < roi.hi[1]; ++y)
      for (int x = roi.lo[0]; x < roi.hi[0]; ++x) {
        const std::size_t i = g.index(x, y, z);
        if (!mask || (*mask)[i] != 0) out.push_back(i);
      }
  return out;
}

double loss_over(const DescriptorVolume& fixed, const DescriptorVolume& moving, std::span<const std::size_t> voxels,
                 const RigidParams& p) {
  if (voxels.empty()) throw DegenerateInputError("rigid loss: no voxels in the region");
  const Grid& g = fixed.grid();
  const Mat3 r = p.matrix();
  const int k_count = fixed.channels();
  const auto nx = static_cast<std::size_t>(g.dims[0]);
  const auto nxy = nx * static_cast<std::size_t>(g.dims[1]);
  double sum = 0.0;
  detail::Stencil s;
  for (const std::size_t i : voxels) {
    const Vec3 pos{double(i % nx), double(i % nxy / nx), double(i / nxy)};
    const Vec3 q = r * (pos - p.center) + p.center + p.translation;
    detail::make_stencil(g.dims, q, s);
    for (int k = 0; k < k_count; ++k) {
      const auto m = moving.channel(k);
      double v = 0.0;
      for (int c = 0; c < 8; ++c) v += s.w[static_cast<std::size_t>(c)] * m[s.idx[static_cast<std::size_t>(c)]];
      const double d = static_cast<double>(fixed.channel(k)[i]) - v;
      sum += d * d;
    }
  }
  return sum / (static_cast<double>(voxels.size()) * k_count);
}

}  // namespace

double rigid_roi_loss(const DescriptorVolume& fixed, const DescriptorVolume& moving, const Box& roi,
                      const RigidParams& p, const LabelVolume* mask) {
  require_same_geometry(fixed.grid(), moving.grid(), "rigid_roi_loss");
  if (mask) require_same_geometry(fixed.grid(), mask->grid(), "rigid_roi_loss mask");
  return loss_over(fixed, moving, roi_voxels(fixed.grid(), roi, mask), p);
}

namespace {

bool flat_in_box(const DescriptorVolume& d, const Box& box) {
  const Grid& g = d.grid();
  for (int k = 0; k < d.channels(); ++k) {
    const auto ch = d.channel(k);
    const float ref = ch[g.index(box.lo[0], box.lo[1], box.lo[2])];
    for (int z = box.lo[2]; z < box.hi[2]; ++z)
      for (int y = box.lo[1]; y < box.hi[1]; ++y)
        for (int x = box.lo[0]; x < box.hi[0]; ++x)
          if (ch[g.index(x, y, z)] != ref) return false;
  }
  return true;
}

double& coord_ref(RigidParams& p, int coord) { return coord < 3 ? p.rotation[coord] : p.translation[coord - 3]; }

}  // namespace

PerLabelRigid estimate_rigid(const DescriptorVolume& fixed, const DescriptorVolume& moving, const LabelVolume& mask,
                             const RigidEstimateOptions& opts, Label label_id) {
  opts.validate();
  require_same_geometry(fixed.grid(), moving.grid(), "estimate_rigid");
  require_same_geometry(fixed.grid(), mask.grid(), "estimate_rigid mask");
  if (fixed.channels() != moving.channels()) throw ArgumentError("estimate_rigid: channel count mismatch");

  std::size_t voxels = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) voxels += mask[i] != 0;
  if (voxels == 0) throw DegenerateInputError("estimate_rigid: empty mask for label " + std::to_string(label_id));

  PerLabelRigid out;
  out.label_id = label_id;
  out.params.center = mask_centroid(mask);
  out.translation_only = voxels < 8;

  const Box roi = mask_bounding_box(mask, opts.roi_margin);
  const std::vector<std::size_t> region = roi_voxels(fixed.grid(), roi, &mask);
  const double identity_loss = loss_over(fixed, moving, region, out.params);
  out.initial_loss = identity_loss;
  out.final_loss = identity_loss;
  out.loss_trace.push_back(identity_loss);

  if (flat_in_box(fixed, roi) || flat_in_box(moving, roi)) {
    out.degenerate = true;
    return out;
  }

  RigidParams p = out.params;
  double loss = identity_loss;
  double step_rot = opts.init_step_rot;
  double step_trans = opts.init_step_trans;
  const int first_coord = out.translation_only ? 3 : 0;

  int sweep = 0;
  while (sweep < opts.max_iters) {
    ++sweep;
    if (loss <= 0.0) break;
    bool improved = false;
    for (int coord = first_coord; coord < 6; ++coord) {
      const double step = coord < 3 ? step_rot : step_trans;
      for (const double sign : {1.0, -1.0}) {
        RigidParams q = p;
        coord_ref(q, coord) += sign * step;
        if (norm(q.rotation) >= std::numbers::pi) continue;
        const double l = loss_over(fixed, moving, region, q);
        if (l < loss) {
          p = q;
          loss = l;
          improved = true;
          out.loss_trace.push_back(l);
          break;
        }
      }
    }
    if (!improved) {
      step_rot *= opts.shrink_factor;
      step_trans *= opts.shrink_factor;
      if (step_trans < opts.tol) break;
    }
  }

  out.iterations_used = sweep;
  if (loss <= identity_loss) {
    out.params = p;
    out.final_loss = loss;
  }
  return out;
}

DisplacementField build_rigid_field(std::span<const PerLabelRigid> estimates, const LabelVolume& labels) {
  std::set<Label> seen;
  for (const auto& e : estimates) {
    if (!seen.insert(e.label_id).second)
      throw ArgumentError("build_rigid_field: duplicate label id " + std::to_string(e.label_id));
    if (!labels.has_label(e.label_id))
      throw ArgumentError("build_rigid_field: label id " + std::to_string(e.label_id) + " not in label map");
  }
  std::vector<DisplacementField> masked;
  masked.reserve(estimates.size() + 1);
  masked.emplace_back(labels.grid());
  for (const auto& e : estimates) {
    const DisplacementField phi = rigid_to_displacement(e.params, labels.grid());
    masked.push_back(mask_field(phi, binary_mask(labels, e.label_id)));
  }
  return sum_fields(masked);
}

PerLabelRigid global_prereg(const DescriptorVolume& fixed, const DescriptorVolume& moving,
                            const RigidEstimateOptions& opts) {
  const LabelVolume all(fixed.grid(), std::vector<Label>(fixed.grid().voxel_count(), 1));
  return estimate_rigid(fixed, moving, all, opts, 0);
}

PerLabelRigid global_prereg(const Volume& fixed, const Volume& moving, const RigidEstimateOptions& opts) {
  require_same_geometry(fixed.grid(), moving.grid(), "global_prereg");
  return global_prereg(mind_descriptor(fixed), mind_descriptor(moving), opts);
}

std::vector<PerLabelRigid> estimate_all_labels(const DescriptorVolume& fixed, const DescriptorVolume& moving,
                                               const LabelVolume& labels, const RigidEstimateOptions& opts) {
  const auto& ids = labels.label_ids();
  std::vector<PerLabelRigid> out(ids.size());
  parallel_for(0, static_cast<std::int64_t>(ids.size()), [&](std::int64_t i) {
    const Label id = ids[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = estimate_rigid(fixed, moving, select_label(labels, id), opts, id);
  });
  return out;
}

}  // namespace hybridreg
