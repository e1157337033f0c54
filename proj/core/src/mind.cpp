#include "hybridreg/mind.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hybridreg/io.hpp"
#include "hybridreg/parallel.hpp"
#include "hybridreg/resample.hpp"

namespace hybridreg {

DescriptorVolume::DescriptorVolume(Grid grid, int channels, float fill) : grid_(grid) {
  grid_.validate();
  if (channels < 1) throw ArgumentError("descriptor needs at least one channel");
  data_.assign(static_cast<std::size_t>(channels), std::vector<float>(grid_.voxel_count(), fill));
}

const std::vector<Index3>& six_neighborhood() {
  static const std::vector<Index3> offsets{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  return offsets;
}

DescriptorVolume mind_descriptor(const Volume& v, const MindOptions& opts) {
  const Grid& g = v.grid();
  const int r = opts.patch_radius;
  if (r < 0) throw ArgumentError("mind_descriptor: patch radius must be >= 0");
  if (!(opts.sigma > 0.0)) throw ArgumentError("mind_descriptor: sigma must be positive");
  for (int a = 0; a < 3; ++a)
    if (g.dims[a] < 2 * r + 3)
      throw ArgumentError("mind_descriptor: volume too small on axis " + std::to_string(a) + " (need >= " +
                          std::to_string(2 * r + 3) + " voxels)");

  const auto& offsets = six_neighborhood();
  const int k_count = static_cast<int>(offsets.size());

  // Clamp-padded copy, padded by r + 1 so that every x + p and x + o + p is a
  // direct lookup.
  const int pad = r + 1;
  const Index3 pd{g.dims[0] + 2 * pad, g.dims[1] + 2 * pad, g.dims[2] + 2 * pad};
  const std::size_t pnx = static_cast<std::size_t>(pd[0]);
  const std::size_t pnxy = pnx * static_cast<std::size_t>(pd[1]);
  std::vector<double> padded(pnxy * static_cast<std::size_t>(pd[2]));
  for (int z = 0; z < pd[2]; ++z)
    for (int y = 0; y < pd[1]; ++y)
      for (int x = 0; x < pd[0]; ++x)
        padded[static_cast<std::size_t>(x) + pnx * y + pnxy * z] = v.at_clamped(x - pad, y - pad, z - pad);
  auto pidx = [&](int x, int y, int z) {
    return static_cast<std::size_t>(x + pad) + pnx * static_cast<std::size_t>(y + pad) +
           pnxy * static_cast<std::size_t>(z + pad);
  };

  struct Tap {
    std::ptrdiff_t offset;
    double weight;
  };
  std::vector<Tap> taps;
  double wsum = 0.0;
  for (int dz = -r; dz <= r; ++dz)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        const double w = std::exp(-(dx * dx + dy * dy + dz * dz) / (2.0 * opts.sigma * opts.sigma));
        taps.push_back({static_cast<std::ptrdiff_t>(dx) + static_cast<std::ptrdiff_t>(pnx) * dy +
                            static_cast<std::ptrdiff_t>(pnxy) * dz,
                        w});
        wsum += w;
      }
  for (auto& t : taps) t.weight /= wsum;

  std::vector<std::ptrdiff_t> off_shift;
  for (const auto& o : offsets)
    off_shift.push_back(static_cast<std::ptrdiff_t>(o[0]) + static_cast<std::ptrdiff_t>(pnx) * o[1] +
                        static_cast<std::ptrdiff_t>(pnxy) * o[2]);

  const std::size_t n = g.voxel_count();
  std::vector<std::vector<double>> dist(static_cast<std::size_t>(k_count), std::vector<double>(n));
  std::vector<double> var(n);
  std::vector<double> slice_sum(static_cast<std::size_t>(g.dims[2]), 0.0);

  parallel_for(0, g.dims[2], [&](std::int64_t zz) {
    const int z = static_cast<int>(zz);
    double acc = 0.0;
    for (int y = 0; y < g.dims[1]; ++y)
      for (int x = 0; x < g.dims[0]; ++x) {
        const std::size_t i = g.index(x, y, z);
        const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(pidx(x, y, z));
        double mean = 0.0;
        for (int k = 0; k < k_count; ++k) {
          double d = 0.0;
          for (const auto& t : taps) {
            const double a = padded[static_cast<std::size_t>(base + t.offset)];
            const double b = padded[static_cast<std::size_t>(base + t.offset + off_shift[static_cast<std::size_t>(k)])];
            d += t.weight * (a - b) * (a - b);
          }
          dist[static_cast<std::size_t>(k)][i] = d;
          mean += d;
        }
        mean /= k_count;
        var[i] = mean;
        acc += mean;
      }
    slice_sum[static_cast<std::size_t>(z)] = acc;
  });

  double total = 0.0;
  for (double s : slice_sum) total += s;
  const double floor_v = std::max(opts.variance_floor * total / static_cast<double>(n),
                                  std::numeric_limits<double>::min());

  DescriptorVolume out(g, k_count);
  parallel_for(0, g.dims[2], [&](std::int64_t zz) {
    const int z = static_cast<int>(zz);
    std::vector<double> c(static_cast<std::size_t>(k_count));
    for (int y = 0; y < g.dims[1]; ++y)
      for (int x = 0; x < g.dims[0]; ++x) {
        const std::size_t i = g.index(x, y, z);
        const double vv = std::max(var[i], floor_v);
        double mx = 0.0;
        for (int k = 0; k < k_count; ++k) {
          c[static_cast<std::size_t>(k)] = std::exp(-dist[static_cast<std::size_t>(k)][i] / vv);
          mx = std::max(mx, c[static_cast<std::size_t>(k)]);
        }
        for (int k = 0; k < k_count; ++k)
          out.channel(k)[i] = mx > 0.0 ? static_cast<float>(c[static_cast<std::size_t>(k)] / mx) : 1.0f;
      }
  });
  return out;
}

double mind_ssd(const DescriptorVolume& fixed, const DescriptorVolume& moving_warped, const LabelVolume* fg_mask) {
  require_same_geometry(fixed.grid(), moving_warped.grid(), "mind_ssd");
  if (fixed.channels() != moving_warped.channels()) throw ArgumentError("mind_ssd: channel count mismatch");
  if (fg_mask) require_same_geometry(fixed.grid(), fg_mask->grid(), "mind_ssd mask");
  const std::size_t n = fixed.voxel_count();
  double sum = 0.0;
  std::size_t count = 0;
  for (int k = 0; k < fixed.channels(); ++k) {
    const auto a = fixed.channel(k);
    const auto b = moving_warped.channel(k);
    for (std::size_t i = 0; i < n; ++i) {
      if (fg_mask && (*fg_mask)[i] == 0) continue;
      const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
      sum += d * d;
      ++count;
    }
  }
  if (count == 0) throw DegenerateInputError("mind_ssd: empty mask");
  return sum / static_cast<double>(count);
}

double smoothness_penalty(const DisplacementField& f) {
  const Grid& g = f.grid();
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    const auto u = f.channel(c);
    for (int a = 0; a < 3; ++a) {
      if (g.dims[a] < 2) continue;
      Index3 step{0, 0, 0};
      step[a] = 1;
      const std::size_t stride = g.index(step[0], step[1], step[2]);
      double sum = 0.0;
      std::size_t count = 0;
      for (int z = 0; z < g.dims[2] - step[2]; ++z)
        for (int y = 0; y < g.dims[1] - step[1]; ++y)
          for (int x = 0; x < g.dims[0] - step[0]; ++x) {
            const std::size_t i = g.index(x, y, z);
            const double d = static_cast<double>(u[i + stride]) - static_cast<double>(u[i]);
            sum += d * d;
            ++count;
          }
      total += sum / static_cast<double>(count);
    }
  }
  return total / 3.0;
}

DescriptorVolume warp_descriptors(const DescriptorVolume& d, const DisplacementField& f) {
  require_same_geometry(d.grid(), f.grid(), "warp_descriptors");
  const Grid& g = d.grid();
  DescriptorVolume out(g, d.channels());
  parallel_for(0, g.dims[2], [&](std::int64_t zz) {
    const int z = static_cast<int>(zz);
    for (int y = 0; y < g.dims[1]; ++y)
      for (int x = 0; x < g.dims[0]; ++x) {
        const std::size_t i = g.index(x, y, z);
        const Vec3 u = f.at(i);
        const Vec3 p{x + u[0], y + u[1], z + u[2]};
        for (int k = 0; k < d.channels(); ++k)
          out.channel(k)[i] = static_cast<float>(sample_trilinear(d.channel(k), g.dims, p));
      }
  });
  return out;
}

void save_descriptors(const DescriptorVolume& d, const std::filesystem::path& path) {
  std::vector<float> data;
  data.reserve(d.voxel_count() * static_cast<std::size_t>(d.channels()));
  for (int k = 0; k < d.channels(); ++k) data.insert(data.end(), d.channel(k).begin(), d.channel(k).end());
  nifti::write(path, d.grid(), d.channels(), nifti::DataType::kFloat32, data);
}

}  // namespace hybridreg
