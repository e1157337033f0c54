#include "hybridreg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hybridreg/resample.hpp"

namespace hybridreg {

namespace {

void validate_box(const Grid& g, const Box& box) {
  for (int a = 0; a < 3; ++a) {
    if (box.lo[a] < 0 || box.hi[a] > g.dims[a] || box.lo[a] >= box.hi[a])
      throw ArgumentError("crop box is empty or outside the grid on axis " + std::to_string(a));
  }
}

Grid cropped_grid(const Grid& g, const Box& box) {
  Grid out = g;
  out.dims = box.extent();
  for (int a = 0; a < 3; ++a) out.origin[a] = g.origin[a] + box.lo[a] * g.spacing[a];
  return out;
}

template <typename T, typename Src>
std::vector<T> copy_block(const Src& v, const Box& box) {
  const Index3 e = box.extent();
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(e[0]) * e[1] * e[2]);
  for (int z = box.lo[2]; z < box.hi[2]; ++z)
    for (int y = box.lo[1]; y < box.hi[1]; ++y)
      for (int x = box.lo[0]; x < box.hi[0]; ++x) out.push_back(v(x, y, z));
  return out;
}

Box dilate_clamp(const Index3& lo, const Index3& hi_incl, int margin, const Grid& g) {
  Box b;
  for (int a = 0; a < 3; ++a) {
    b.lo[a] = std::max(0, lo[a] - margin);
    b.hi[a] = std::min(g.dims[a], hi_incl[a] + 1 + margin);
  }
  return b;
}

template <typename Pred>
bool scan_box(const LabelVolume& labels, Pred pred, Index3& lo, Index3& hi) {
  const Grid& g = labels.grid();
  lo = {std::numeric_limits<int>::max(), std::numeric_limits<int>::max(), std::numeric_limits<int>::max()};
  hi = {-1, -1, -1};
  bool any = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!pred(labels[i])) continue;
    any = true;
    const Index3 c = g.coords(i);
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], c[a]);
      hi[a] = std::max(hi[a], c[a]);
    }
  }
  return any;
}

void validate_target(const Index3& t) {
  for (int a = 0; a < 3; ++a)
    if (t[a] < 1) throw ArgumentError("target dims must be >= 1");
}

// Output voxel j of n_out maps to input coordinate (j + 0.5) * n_in / n_out - 0.5.
double source_coord(int j, int n_in, int n_out) {
  if (n_in == n_out) return static_cast<double>(j);
  return (j + 0.5) * static_cast<double>(n_in) / static_cast<double>(n_out) - 0.5;
}

Grid resized_grid(const Grid& g, const Index3& t) {
  Grid out = g;
  out.dims = t;
  for (int a = 0; a < 3; ++a) {
    const double ratio = static_cast<double>(g.dims[a]) / static_cast<double>(t[a]);
    out.spacing[a] = g.spacing[a] * ratio;
    out.origin[a] = g.origin[a] + source_coord(0, g.dims[a], t[a]) * g.spacing[a];
  }
  return out;
}

}  // namespace

Volume crop(const Volume& v, const Box& box) {
  validate_box(v.grid(), box);
  return Volume(cropped_grid(v.grid(), box), copy_block<float>(v, box));
}

LabelVolume crop(const LabelVolume& v, const Box& box) {
  validate_box(v.grid(), box);
  return LabelVolume(cropped_grid(v.grid(), box), copy_block<Label>(v, box));
}

Box label_bounding_box(const LabelVolume& labels, Label id, int margin) {
  if (margin < 0) throw ArgumentError("margin must be >= 0");
  Index3 lo, hi;
  if (id == 0 || !scan_box(labels, [id](Label v) { return v == id; }, lo, hi))
    throw NotFoundError("label " + std::to_string(id) + " not present");
  return dilate_clamp(lo, hi, margin, labels.grid());
}

Box mask_bounding_box(const LabelVolume& mask, int margin) {
  if (margin < 0) throw ArgumentError("margin must be >= 0");
  Index3 lo, hi;
  if (!scan_box(mask, [](Label v) { return v != 0; }, lo, hi)) throw DegenerateInputError("mask is empty");
  return dilate_clamp(lo, hi, margin, mask.grid());
}

Volume resize_trilinear(const Volume& v, const Index3& target_dims) {
  validate_target(target_dims);
  const Grid out_grid = resized_grid(v.grid(), target_dims);
  const Index3& in = v.dims();
  std::vector<float> out(out_grid.voxel_count());
  for (int z = 0; z < target_dims[2]; ++z)
    for (int y = 0; y < target_dims[1]; ++y)
      for (int x = 0; x < target_dims[0]; ++x) {
        const Vec3 p{source_coord(x, in[0], target_dims[0]), source_coord(y, in[1], target_dims[1]),
                     source_coord(z, in[2], target_dims[2])};
        out[out_grid.index(x, y, z)] = static_cast<float>(sample_trilinear(v.data(), in, p));
      }
  return Volume(out_grid, std::move(out));
}

LabelVolume resize_nearest(const LabelVolume& labels, const Index3& target_dims) {
  validate_target(target_dims);
  const Grid out_grid = resized_grid(labels.grid(), target_dims);
  const Index3& in = labels.dims();
  std::vector<Label> out(out_grid.voxel_count());
  for (int z = 0; z < target_dims[2]; ++z)
    for (int y = 0; y < target_dims[1]; ++y)
      for (int x = 0; x < target_dims[0]; ++x) {
        const Vec3 p{source_coord(x, in[0], target_dims[0]), source_coord(y, in[1], target_dims[1]),
                     source_coord(z, in[2], target_dims[2])};
        const Index3 q = nearest_index(in, p);
        out[out_grid.index(x, y, z)] = labels(q[0], q[1], q[2]);
      }
  return LabelVolume(out_grid, std::move(out));
}

Volume normalize_minmax(const Volume& v) {
  const auto d = v.data();
  const auto [mn, mx] = std::minmax_element(d.begin(), d.end());
  const double lo = *mn, hi = *mx;
  std::vector<float> out(d.size(), 0.0f);
  if (hi > lo)
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = static_cast<float>((d[i] - lo) / (hi - lo));
  return Volume(v.grid(), std::move(out));
}

}  // namespace hybridreg
