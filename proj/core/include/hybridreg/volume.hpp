#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "hybridreg/errors.hpp"
#include "hybridreg/linalg.hpp"

namespace hybridreg {

using Index3 = std::array<int, 3>;

// Voxel lattice geometry. Data on a grid is stored row-major with x fastest:
// index = x + dims[0] * (y + dims[1] * z).
struct Grid {
  Index3 dims{1, 1, 1};
  Vec3 spacing{1.0, 1.0, 1.0};  // mm per voxel
  Vec3 origin{0.0, 0.0, 0.0};   // mm, position of voxel (0,0,0)

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
           static_cast<std::size_t>(dims[2]);
  }
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(z));
  }
  Index3 coords(std::size_t i) const {
    const auto nx = static_cast<std::size_t>(dims[0]);
    const auto ny = static_cast<std::size_t>(dims[1]);
    return {static_cast<int>(i % nx), static_cast<int>((i / nx) % ny), static_cast<int>(i / (nx * ny))};
  }
  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims[0] && y < dims[1] && z < dims[2];
  }

  // Throws ArgumentError unless dims >= 1 and spacing > 0.
  void validate() const;

  friend bool operator==(const Grid&, const Grid&) = default;
};

// Same dims, and spacing/origin equal to within 1e-6 mm.
bool same_geometry(const Grid& a, const Grid& b);
void require_same_geometry(const Grid& a, const Grid& b, const char* what);

template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  explicit Image(Grid grid, T fill = T{}) : grid_(grid), data_(grid.voxel_count(), fill) { grid_.validate(); }
  Image(Grid grid, std::vector<T> data) : grid_(grid), data_(std::move(data)) {
    grid_.validate();
    if (data_.size() != grid_.voxel_count()) throw ArgumentError("image data length does not match grid");
  }

  const Grid& grid() const { return grid_; }
  const Index3& dims() const { return grid_.dims; }
  std::size_t size() const { return data_.size(); }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T operator[](std::size_t i) const { return data_[i]; }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator()(int x, int y, int z) const { return data_[grid_.index(x, y, z)]; }
  T& operator()(int x, int y, int z) { return data_[grid_.index(x, y, z)]; }

  T at_clamped(int x, int y, int z) const {
    x = x < 0 ? 0 : (x >= grid_.dims[0] ? grid_.dims[0] - 1 : x);
    y = y < 0 ? 0 : (y >= grid_.dims[1] ? grid_.dims[1] - 1 : y);
    z = z < 0 ? 0 : (z >= grid_.dims[2] ? grid_.dims[2] - 1 : z);
    return data_[grid_.index(x, y, z)];
  }

 private:
  Grid grid_{};
  std::vector<T> data_;
};

// Scalar intensity volume: 32-bit storage, reductions accumulate in double.
class Volume : public Image<float> {
 public:
  using Image<float>::Image;

  // Throws DataError if any value is NaN or infinite.
  void require_finite() const;
};

using Label = std::uint16_t;

// Integer label map; 0 is background. label_ids() is the sorted set of distinct
// nonzero values and is computed once at construction, so the voxel data is
// read-only.
class LabelVolume {
 public:
  LabelVolume() = default;
  explicit LabelVolume(Grid grid);
  LabelVolume(Grid grid, std::vector<Label> data);

  const Grid& grid() const { return image_.grid(); }
  const Index3& dims() const { return image_.dims(); }
  std::size_t size() const { return image_.size(); }
  std::span<const Label> data() const { return image_.data(); }
  Label operator[](std::size_t i) const { return image_[i]; }
  Label operator()(int x, int y, int z) const { return image_(x, y, z); }
  Label at_clamped(int x, int y, int z) const { return image_.at_clamped(x, y, z); }

  const std::vector<Label>& label_ids() const { return ids_; }
  bool has_label(Label id) const;
  std::size_t count(Label id) const;

 private:
  Image<Label> image_;
  std::vector<Label> ids_;
};

// Binary mask of voxels equal to `id`, as a LabelVolume with values {0,1}.
LabelVolume binary_mask(const LabelVolume& labels, Label id);
// Union of all nonzero labels as a {0,1} mask.
LabelVolume foreground_mask(const LabelVolume& labels);
// Box (Chebyshev) dilation of the nonzero set by `radius` voxels, output {0,1}.
LabelVolume dilate(const LabelVolume& mask, int radius);

// Voxel-coordinate centroid of the nonzero voxels; throws DegenerateInputError
// when the mask is empty.
Vec3 mask_centroid(const LabelVolume& mask);

}  // namespace hybridreg
