#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "hybridreg/field.hpp"
#include "hybridreg/volume.hpp"

namespace hybridreg {

// K-channel self-similarity descriptor on a grid; every value lies in [0, 1].
class DescriptorVolume {
 public:
  DescriptorVolume() = default;
  DescriptorVolume(Grid grid, int channels, float fill = 0.0f);

  const Grid& grid() const { return grid_; }
  const Index3& dims() const { return grid_.dims; }
  int channels() const { return static_cast<int>(data_.size()); }
  std::size_t voxel_count() const { return grid_.voxel_count(); }

  std::span<const float> channel(int k) const { return data_[static_cast<std::size_t>(k)]; }
  std::span<float> channel(int k) { return data_[static_cast<std::size_t>(k)]; }

 private:
  Grid grid_{};
  std::vector<std::vector<float>> data_;
};

struct MindOptions {
  int patch_radius = 1;
  double sigma = 0.5;               // Gaussian patch weight, voxels
  double variance_floor = 1e-6;     // relative to the global mean of V(x)
};

// The six unit offsets (+x, -x, +y, -y, +z, -z), in channel order.
const std::vector<Index3>& six_neighborhood();

// MIND descriptor over the 6-neighbourhood:
//   D(x,o) = sum_p w(p) (I(x+p) - I(x+o+p))^2          (w normalised Gaussian)
//   V(x)   = max(mean_o D(x,o), floor)                  floor = variance_floor * mean_x V
//   c_o(x) = exp(-D(x,o) / V(x)), then divided by max_o c_o(x)
// Samples outside the grid are clamped. Requires dims >= 2*patch_radius+3.
DescriptorVolume mind_descriptor(const Volume& v, const MindOptions& opts = {});

// Mean over (masked) voxels and channels of the squared channel difference.
double mind_ssd(const DescriptorVolume& fixed, const DescriptorVolume& moving_warped,
                const LabelVolume* fg_mask = nullptr);

// Mean squared forward-difference gradient of the field:
//   (1/3) sum_c sum_a mean_{x : x+e_a in grid} (u_c(x+e_a) - u_c(x))^2
// so the ramp u_x = x, u_y = u_z = 0 scores exactly 1/3.
double smoothness_penalty(const DisplacementField& f);

struct LossWeights {
  double lambda = 0.2;
};

inline double total_loss(double sim, double smooth, const LossWeights& w) { return sim + w.lambda * smooth; }

// Channelwise warp of a descriptor volume: out_k(x) = d_k(x + u(x)).
DescriptorVolume warp_descriptors(const DescriptorVolume& d, const DisplacementField& f);

// Multi-channel dump for debugging (one NIfTI component per channel).
void save_descriptors(const DescriptorVolume& d, const std::filesystem::path& path);

}  // namespace hybridreg
