#include "hybridreg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hybridreg/parallel.hpp"

namespace hybridreg {

DiceResult dice(const LabelVolume& fixed_labels, const LabelVolume& warped_labels, Label id) {
  require_same_geometry(fixed_labels.grid(), warped_labels.grid(), "dice");
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < fixed_labels.size(); ++i) {
    const bool in_a = fixed_labels[i] == id;
    const bool in_b = warped_labels[i] == id;
    a += in_a;
    b += in_b;
    both += in_a && in_b;
  }
  if (a + b == 0) return {1.0, true};
  return {2.0 * static_cast<double>(both) / static_cast<double>(a + b), false};
}

DiceSummary mean_dice(const LabelVolume& fixed_labels, const LabelVolume& warped_labels) {
  DiceSummary s;
  for (Label id : fixed_labels.label_ids())
    if (warped_labels.has_label(id)) s.per_label.push_back({id, dice(fixed_labels, warped_labels, id).value});
  if (s.per_label.empty()) throw NotFoundError("mean_dice: no label ids shared by both maps");
  double sum = 0.0;
  for (const auto& l : s.per_label) sum += l.value;
  s.mean = sum / static_cast<double>(s.per_label.size());
  double var = 0.0;
  for (const auto& l : s.per_label) var += (l.value - s.mean) * (l.value - s.mean);
  s.std = std::sqrt(var / static_cast<double>(s.per_label.size()));
  return s;
}

std::vector<Index3> boundary_voxels(const LabelVolume& mask) {
  const Grid& g = mask.grid();
  static const Index3 nb[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  std::vector<Index3> out;
  for (int z = 0; z < g.dims[2]; ++z)
    for (int y = 0; y < g.dims[1]; ++y)
      for (int x = 0; x < g.dims[0]; ++x) {
        if (mask(x, y, z) == 0) continue;
        for (const auto& o : nb) {
          const int qx = x + o[0], qy = y + o[1], qz = z + o[2];
          if (!g.contains(qx, qy, qz) || mask(qx, qy, qz) == 0) {
            out.push_back({x, y, z});
            break;
          }
        }
      }
  return out;
}

namespace {

std::vector<double> directed_distances(const std::vector<Index3>& from, const std::vector<Index3>& to,
                                       const Vec3& spacing) {
  std::vector<double> out(from.size());
  parallel_for(0, static_cast<std::int64_t>(from.size()), [&](std::int64_t ii) {
    const Index3& p = from[static_cast<std::size_t>(ii)];
    double best = std::numeric_limits<double>::infinity();
    for (const Index3& q : to) {
      const double dx = (p[0] - q[0]) * spacing[0];
      const double dy = (p[1] - q[1]) * spacing[1];
      const double dz = (p[2] - q[2]) * spacing[2];
      best = std::min(best, dx * dx + dy * dy + dz * dz);
    }
    out[static_cast<std::size_t>(ii)] = std::sqrt(best);
  });
  return out;
}

}  // namespace

double hd95(const LabelVolume& mask_a, const LabelVolume& mask_b, const Vec3& spacing) {
  require_same_geometry(mask_a.grid(), mask_b.grid(), "hd95");
  const auto ba = boundary_voxels(mask_a);
  const auto bb = boundary_voxels(mask_b);
  if (ba.empty() || bb.empty()) throw DegenerateInputError("hd95: empty mask");
  std::vector<double> pooled = directed_distances(ba, bb, spacing);
  const auto back = directed_distances(bb, ba, spacing);
  pooled.insert(pooled.end(), back.begin(), back.end());
  std::sort(pooled.begin(), pooled.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(pooled.size())));
  return pooled[std::max<std::size_t>(rank, 1) - 1];
}

Hd95Summary hd95_per_label(const LabelVolume& fixed_labels, const LabelVolume& warped_labels) {
  Hd95Summary s;
  for (Label id : fixed_labels.label_ids()) {
    if (!warped_labels.has_label(id)) continue;
    s.per_label.push_back(
        {id, hd95(binary_mask(fixed_labels, id), binary_mask(warped_labels, id), fixed_labels.grid().spacing)});
  }
  if (s.per_label.empty()) throw NotFoundError("hd95_per_label: no label ids shared by both maps");
  double sum = 0.0;
  for (const auto& l : s.per_label) sum += l.value;
  s.mean = sum / static_cast<double>(s.per_label.size());
  return s;
}

double neg_jacobian_pct(const DisplacementField& field, const LabelVolume& fg_mask) {
  require_same_geometry(field.grid(), fg_mask.grid(), "neg_jacobian_pct");
  const Volume det = jacobian_determinant(field);
  std::size_t fg = 0, neg = 0;
  for (std::size_t i = 0; i < det.size(); ++i) {
    if (fg_mask[i] == 0) continue;
    ++fg;
    neg += det[i] < 0.0f;
  }
  if (fg == 0) throw DegenerateInputError("neg_jacobian_pct: empty foreground");
  return 100.0 * static_cast<double>(neg) / static_cast<double>(fg);
}

LabelVolume jacobian_foreground(const LabelVolume& labels) { return dilate(foreground_mask(labels), 2); }

}  // namespace hybridreg
