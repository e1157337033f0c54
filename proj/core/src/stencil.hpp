#pragma once

#include <array>
#include <cmath>
#include <cstddef>

#include "hybridreg/linalg.hpp"
#include "hybridreg/volume.hpp"

namespace hybridreg::detail {

// The eight corner indices and weights of a clamped trilinear sample, plus the
// derivative of each weight with respect to the sample position. Corner bit 0
// selects x+1, bit 1 y+1, bit 2 z+1. Matches sample_trilinear_grad.
struct Stencil {
  std::array<std::size_t, 8> idx{};
  std::array<double, 8> w{};
  std::array<std::array<double, 8>, 3> dw{};
};

inline void make_stencil(const Index3& dims, const Vec3& p, Stencil& s) {
  std::array<int, 3> i0{}, i1{};
  std::array<double, 3> f{}, slope{};
  for (int a = 0; a < 3; ++a) {
    const int n = dims[a];
    if (n <= 1) {
      i0[a] = i1[a] = 0;
      f[a] = 0.0;
      slope[a] = 0.0;
      continue;
    }
    double q = p[a];
    slope[a] = 1.0;
    const double hi = static_cast<double>(n - 1);
    if (q < 0.0) {
      q = 0.0;
      slope[a] = 0.0;
    } else if (q > hi) {
      q = hi;
      slope[a] = 0.0;
    }
    int c = static_cast<int>(std::floor(q));
    if (c >= n - 1) c = n - 2;
    i0[a] = c;
    i1[a] = c + 1;
    f[a] = q - c;
  }
  const std::size_t nx = static_cast<std::size_t>(dims[0]);
  const std::size_t nxy = nx * static_cast<std::size_t>(dims[1]);
  for (int corner = 0; corner < 8; ++corner) {
    const int bx = corner & 1, by = (corner >> 1) & 1, bz = (corner >> 2) & 1;
    const std::size_t x = static_cast<std::size_t>(bx ? i1[0] : i0[0]);
    const std::size_t y = static_cast<std::size_t>(by ? i1[1] : i0[1]);
    const std::size_t z = static_cast<std::size_t>(bz ? i1[2] : i0[2]);
    s.idx[static_cast<std::size_t>(corner)] = x + nx * y + nxy * z;
    const double wx = bx ? f[0] : 1.0 - f[0];
    const double wy = by ? f[1] : 1.0 - f[1];
    const double wz = bz ? f[2] : 1.0 - f[2];
    const double sx = (bx ? 1.0 : -1.0) * slope[0];
    const double sy = (by ? 1.0 : -1.0) * slope[1];
    const double sz = (bz ? 1.0 : -1.0) * slope[2];
    s.w[static_cast<std::size_t>(corner)] = wx * wy * wz;
    s.dw[0][static_cast<std::size_t>(corner)] = sx * wy * wz;
    s.dw[1][static_cast<std::size_t>(corner)] = wx * sy * wz;
    s.dw[2][static_cast<std::size_t>(corner)] = wx * wy * sz;
  }
}

}  // namespace hybridreg::detail
