#include "hybridreg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hybridreg {

void Grid::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw ArgumentError("grid dims must be >= 1 (axis " + std::to_string(a) + ")");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
      throw ArgumentError("grid spacing must be positive (axis " + std::to_string(a) + ")");
    if (!std::isfinite(origin[a])) throw ArgumentError("grid origin must be finite");
  }
}

bool same_geometry(const Grid& a, const Grid& b) {
  if (a.dims != b.dims) return false;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(a.spacing[i] - b.spacing[i]) > 1e-6) return false;
    if (std::abs(a.origin[i] - b.origin[i]) > 1e-6) return false;
  }
  return true;
}

void require_same_geometry(const Grid& a, const Grid& b, const char* what) {
  if (!same_geometry(a, b)) throw ArgumentError(std::string(what) + ": grid mismatch");
}

void Volume::require_finite() const {
  for (std::size_t i = 0; i < size(); ++i)
    if (!std::isfinite((*this)[i])) throw DataError("volume contains a non-finite value at voxel " + std::to_string(i));
}

namespace {
std::vector<Label> collect_ids(std::span<const Label> data) {
  std::vector<bool> seen(65536, false);
  for (Label v : data) seen[v] = true;
  std::vector<Label> ids;
  for (std::size_t v = 1; v < seen.size(); ++v)
    if (seen[v]) ids.push_back(static_cast<Label>(v));
  return ids;
}
}  // namespace

LabelVolume::LabelVolume(Grid grid) : image_(grid, Label{0}) {}

LabelVolume::LabelVolume(Grid grid, std::vector<Label> data) : image_(grid, std::move(data)) {
  ids_ = collect_ids(image_.data());
}

bool LabelVolume::has_label(Label id) const { return std::binary_search(ids_.begin(), ids_.end(), id); }

std::size_t LabelVolume::count(Label id) const {
  return static_cast<std::size_t>(std::count(image_.data().begin(), image_.data().end(), id));
}

LabelVolume binary_mask(const LabelVolume& labels, Label id) {
  std::vector<Label> out(labels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = labels[i] == id ? 1 : 0;
  return LabelVolume(labels.grid(), std::move(out));
}

LabelVolume foreground_mask(const LabelVolume& labels) {
  std::vector<Label> out(labels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = labels[i] != 0 ? 1 : 0;
  return LabelVolume(labels.grid(), std::move(out));
}

LabelVolume dilate(const LabelVolume& mask, int radius) {
  if (radius < 0) throw ArgumentError("dilation radius must be >= 0");
  const Grid& g = mask.grid();
  const auto& d = g.dims;
  // Separable max filter: a box dilation is three 1D dilations.
  std::vector<Label> cur(mask.size());
  for (std::size_t i = 0; i < cur.size(); ++i) cur[i] = mask[i] != 0 ? 1 : 0;
  std::vector<Label> next(cur.size());
  for (int axis = 0; axis < 3; ++axis) {
    for (int z = 0; z < d[2]; ++z)
      for (int y = 0; y < d[1]; ++y)
        for (int x = 0; x < d[0]; ++x) {
          Index3 p{x, y, z};
          Label v = 0;
          const int c = p[axis];
          for (int o = std::max(0, c - radius); o <= std::min(d[axis] - 1, c + radius) && !v; ++o) {
            p[axis] = o;
            v = cur[g.index(p[0], p[1], p[2])];
          }
          next[g.index(x, y, z)] = v;
        }
    std::swap(cur, next);
  }
  return LabelVolume(g, std::move(cur));
}

Vec3 mask_centroid(const LabelVolume& mask) {
  const Grid& g = mask.grid();
  Vec3 sum{0, 0, 0};
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == 0) continue;
    const Index3 c = g.coords(i);
    sum = sum + Vec3{double(c[0]), double(c[1]), double(c[2])};
    ++n;
  }
  if (n == 0) throw DegenerateInputError("centroid of an empty mask");
  return (1.0 / double(n)) * sum;
}

}  // namespace hybridreg
