#pragma once

#include <cstdint>
#include <vector>

#include "hybridreg/volume.hpp"

namespace hybridreg::msl {

// Dense C-channel feature map on a 3D lattice, channel-major:
// data[c * N + (x + X * (y + Y * z))].
struct FeatureTensor {
  Index3 dims{1, 1, 1};
  int channels = 1;
  std::vector<double> data;

  FeatureTensor() = default;
  FeatureTensor(const Index3& d, int c, double fill = 0.0);

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
           static_cast<std::size_t>(dims[2]);
  }
  std::size_t voxel_index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(z));
  }
  double& at(int c, std::size_t voxel) { return data[static_cast<std::size_t>(c) * voxel_count() + voxel]; }
  double at(int c, std::size_t voxel) const { return data[static_cast<std::size_t>(c) * voxel_count() + voxel]; }

  bool same_shape(const FeatureTensor& o) const { return dims == o.dims && channels == o.channels; }
};

using Sequence = std::vector<std::vector<double>>;  // [t][c]

enum class ScanOrder { kRasterXYZ };

// Raster serialisation: sequence position i = x + X * (y + Y * z).
Sequence serialize(const FeatureTensor& z, ScanOrder order = ScanOrder::kRasterXYZ);
FeatureTensor deserialize(const Sequence& seq, const Index3& dims, ScanOrder order = ScanOrder::kRasterXYZ);

// Diagonal linear state-space model, one state vector of size S per channel:
//   h_t[c,s] = exp(delta_c A_s) h_{t-1}[c,s] + delta_c B[c,s] x_t[c]
//   y_t[c]   = sum_s C_out[c,s] h_t[c,s],     h_0 = 0.
struct SsmParams {
  int state_dim = 1;
  std::vector<double> a;      // S, entries <= 0
  std::vector<double> b;      // C x S, row-major
  std::vector<double> c_out;  // C x S, row-major
  std::vector<double> delta;  // C, entries > 0

  void validate(int channels) const;
};

Sequence ssm_scan(const Sequence& seq, const SsmParams& p);

// Per-channel hidden-state trajectory for a unit impulse at t = 0, used to
// check stability: |h_t[c,s]| is non-increasing in t when A <= 0.
std::vector<std::vector<double>> ssm_impulse_states(const SsmParams& p, int channel, int steps);

// Window self-attention. The input is clamp-padded up to a multiple of the
// window; voxel p belongs to window floor((p + (w - shift) mod w) / w) per
// axis, so a nonzero shift moves window borders by `shift` voxels. Each query
// attends with softmax(q.k * scale) over the voxels of its own window; the
// result is cropped back to the input dims.
struct AttnParams {
  Index3 window{4, 4, 4};
  Index3 shift{0, 0, 0};
  std::vector<double> wq, wk, wv;  // C x C, row-major
  double scale = 1.0;

  void validate(int channels) const;
};

FeatureTensor window_attention(const FeatureTensor& z, const AttnParams& p);

// Attention weights of one query voxel over its window, in window-local
// raster order of the padded lattice. Exposed to check row-stochasticity.
std::vector<double> attention_row(const FeatureTensor& z, const AttnParams& p, const Index3& query);

// Gate G = sigmoid(Wg [z_m; z_s] + bias), Wg is C x 2C row-major.
struct GateParams {
  std::vector<double> wg;
  std::vector<double> bias;

  void validate(int channels) const;
};

// Z_fuse = G * Z_m + (1 - G) * Z_s, elementwise.
FeatureTensor gate_fuse(const FeatureTensor& z_m, const FeatureTensor& z_s, const GateParams& p);
FeatureTensor gate_values(const FeatureTensor& z_m, const FeatureTensor& z_s, const GateParams& p);

// Parallel SSM and window-attention branches fused by the gate.
FeatureTensor msl_forward(const FeatureTensor& z, const SsmParams& ssm, const AttnParams& attn, const GateParams& gate);

// Deterministic test parameters: weights uniform in [-0.5, 0.5], A uniform in
// [-1, -0.01], delta uniform in [0.1, 1], from a fixed seed.
struct RandomParams {
  SsmParams ssm;
  AttnParams attn;
  GateParams gate;
};
RandomParams random_params(int channels, int state_dim, const Index3& window, std::uint64_t seed);
FeatureTensor random_tensor(const Index3& dims, int channels, std::uint64_t seed);

}  // namespace hybridreg::msl
