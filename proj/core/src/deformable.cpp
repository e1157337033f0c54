#include "hybridreg/deformable.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "hybridreg/parallel.hpp"
#include "stencil.hpp"

namespace hybridreg {

ControlGrid ControlGrid::covering(const Grid& grid, double spacing_vox) {
  if (!(spacing_vox > 0.0)) throw ArgumentError("control grid spacing must be positive");
  ControlGrid g;
  for (int a = 0; a < 3; ++a) {
    const int needed = static_cast<int>(std::ceil((grid.dims[a] - 1) / spacing_vox - 1e-9)) + 1;
    g.cdims[a] = std::max(2, needed);
    g.spacing_vox[a] = spacing_vox;
  }
  g.values.assign(3 * g.point_count(), 0.0);
  return g;
}

ControlGrid ControlGrid::spanning(const Grid& grid, const Index3& cdims) {
  ControlGrid g;
  for (int a = 0; a < 3; ++a) {
    if (cdims[a] < 2) throw ArgumentError("control grid needs >= 2 points per axis");
    g.cdims[a] = cdims[a];
    g.spacing_vox[a] = grid.dims[a] > 1 ? double(grid.dims[a] - 1) / double(cdims[a] - 1) : 1.0;
  }
  g.values.assign(3 * g.point_count(), 0.0);
  return g;
}

void ControlGrid::validate_covers(const Grid& grid) const {
  for (int a = 0; a < 3; ++a) {
    if (cdims[a] < 2) throw ArgumentError("control grid needs >= 2 points per axis");
    if (!(spacing_vox[a] > 0.0)) throw ArgumentError("control grid spacing must be positive");
    if ((cdims[a] - 1) * spacing_vox[a] < grid.dims[a] - 1 - 1e-9)
      throw ArgumentError("control grid does not cover the image on axis " + std::to_string(a));
  }
  if (values.size() != 3 * point_count()) throw ArgumentError("control grid value count mismatch");
}

namespace {

// Per-axis interpolation tables from voxel coordinate to (cell, fraction).
struct Upsampler {
  std::array<std::vector<int>, 3> cell;
  std::array<std::vector<double>, 3> frac;

  Upsampler(const ControlGrid& g, const Grid& grid) {
    g.validate_covers(grid);
    for (int a = 0; a < 3; ++a) {
      cell[a].resize(static_cast<std::size_t>(grid.dims[a]));
      frac[a].resize(static_cast<std::size_t>(grid.dims[a]));
      for (int x = 0; x < grid.dims[a]; ++x) {
        const double t = x / g.spacing_vox[a];
        int c = static_cast<int>(std::floor(t));
        if (c >= g.cdims[a] - 1) c = g.cdims[a] - 2;
        cell[a][static_cast<std::size_t>(x)] = c;
        frac[a][static_cast<std::size_t>(x)] = t - c;
      }
    }
  }

  // Calls fn(control_point_index, weight) for the eight neighbours of a voxel.
  template <typename Fn>
  void for_each(const ControlGrid& g, int x, int y, int z, Fn&& fn) const {
    const int cx = cell[0][static_cast<std::size_t>(x)], cy = cell[1][static_cast<std::size_t>(y)],
              cz = cell[2][static_cast<std::size_t>(z)];
    const double fx = frac[0][static_cast<std::size_t>(x)], fy = frac[1][static_cast<std::size_t>(y)],
                 fz = frac[2][static_cast<std::size_t>(z)];
    for (int corner = 0; corner < 8; ++corner) {
      const int bx = corner & 1, by = (corner >> 1) & 1, bz = (corner >> 2) & 1;
      const double w = (bx ? fx : 1 - fx) * (by ? fy : 1 - fy) * (bz ? fz : 1 - fz);
      fn(g.index(0, cx + bx, cy + by, cz + bz), w);
    }
  }
};

std::array<std::vector<double>, 3> upsample_double(const ControlGrid& g, const Grid& grid, const Upsampler& up) {
  std::array<std::vector<double>, 3> u;
  for (auto& ch : u) ch.assign(grid.voxel_count(), 0.0);
  const std::size_t np = g.point_count();
  parallel_for(0, grid.dims[2], [&](std::int64_t zz) {
    const int z = static_cast<int>(zz);
    for (int y = 0; y < grid.dims[1]; ++y)
      for (int x = 0; x < grid.dims[0]; ++x) {
        const std::size_t i = grid.index(x, y, z);
        double acc[3] = {0, 0, 0};
        up.for_each(g, x, y, z, [&](std::size_t p, double w) {
          for (int c = 0; c < 3; ++c) acc[c] += w * g.values[static_cast<std::size_t>(c) * np + p];
        });
        for (int c = 0; c < 3; ++c) u[static_cast<std::size_t>(c)][i] = acc[c];
      }
  });
  return u;
}

// Smoothness of a double-valued field; if grad is non-null, adds lambda *
// dS/du to it.
double smooth_and_grad(const std::array<std::vector<double>, 3>& u, const Grid& grid, double lambda,
                       std::array<std::vector<double>, 3>* grad) {
  double total = 0.0;
  for (int a = 0; a < 3; ++a) {
    if (grid.dims[a] < 2) continue;
    Index3 step{0, 0, 0};
    step[a] = 1;
    const std::size_t stride = grid.index(step[0], step[1], step[2]);
    Index3 valid = grid.dims;
    valid[a] -= 1;
    const double count = static_cast<double>(valid[0]) * valid[1] * valid[2];
    const double coef = 2.0 / (3.0 * count);
    for (int c = 0; c < 3; ++c) {
      const auto& uc = u[static_cast<std::size_t>(c)];
      double sum = 0.0;
      for (int z = 0; z < valid[2]; ++z)
        for (int y = 0; y < valid[1]; ++y)
          for (int x = 0; x < valid[0]; ++x) {
            const std::size_t i = grid.index(x, y, z);
            const double d = uc[i + stride] - uc[i];
            sum += d * d;
            if (grad) {
              auto& gc = (*grad)[static_cast<std::size_t>(c)];
              gc[i + stride] += lambda * coef * d;
              gc[i] -= lambda * coef * d;
            }
          }
      total += sum / count;
    }
  }
  return total / 3.0;
}

struct Evaluation {
  ObjectiveTerms terms;
  std::vector<double> grad;
};

Evaluation evaluate(const DescriptorVolume& fixed, const DescriptorVolume& moving, const ControlGrid& g,
                    const DisplacementField& rigid_field, double lambda, SmoothTarget target, bool want_grad) {
  const Grid& grid = fixed.grid();
  require_same_geometry(grid, moving.grid(), "objective");
  require_same_geometry(grid, rigid_field.grid(), "objective rigid field");
  if (fixed.channels() != moving.channels()) throw ArgumentError("objective: channel count mismatch");
  if (!(lambda >= 0.0)) throw ArgumentError("objective: lambda must be >= 0");
  const Upsampler up(g, grid);
  auto u_def = upsample_double(g, grid, up);

  const std::size_t n = grid.voxel_count();
  const int k_count = fixed.channels();
  const double norm_sim = 1.0 / (static_cast<double>(n) * k_count);

  std::array<std::vector<double>, 3> dl_du;
  if (want_grad)
    for (auto& ch : dl_du) ch.assign(n, 0.0);

  std::vector<double> slice_sim(static_cast<std::size_t>(grid.dims[2]), 0.0);
  parallel_for(0, grid.dims[2], [&](std::int64_t zz) {
    const int z = static_cast<int>(zz);
    detail::Stencil s;
    double acc = 0.0;
    for (int y = 0; y < grid.dims[1]; ++y)
      for (int x = 0; x < grid.dims[0]; ++x) {
        const std::size_t i = grid.index(x, y, z);
        const Vec3 r = rigid_field.at(i);
        const Vec3 p{x + u_def[0][i] + r[0], y + u_def[1][i] + r[1], z + u_def[2][i] + r[2]};
        detail::make_stencil(grid.dims, p, s);
        double gx = 0, gy = 0, gz = 0;
        for (int k = 0; k < k_count; ++k) {
          const auto m = moving.channel(k);
          double v = 0, dx = 0, dy = 0, dz = 0;
          for (std::size_t c = 0; c < 8; ++c) {
            const double mv = m[s.idx[c]];
            v += s.w[c] * mv;
            dx += s.dw[0][c] * mv;
            dy += s.dw[1][c] * mv;
            dz += s.dw[2][c] * mv;
          }
          const double res = static_cast<double>(fixed.channel(k)[i]) - v;
          acc += res * res;
          gx += res * dx;
          gy += res * dy;
          gz += res * dz;
        }
        if (want_grad) {
          dl_du[0][i] = -2.0 * norm_sim * gx;
          dl_du[1][i] = -2.0 * norm_sim * gy;
          dl_du[2][i] = -2.0 * norm_sim * gz;
        }
      }
    slice_sim[static_cast<std::size_t>(z)] = acc;
  });

  Evaluation ev;
  double sim = 0.0;
  for (double s : slice_sim) sim += s;
  ev.terms.similarity = sim * norm_sim;

  if (target == SmoothTarget::kHybrid)
    for (int c = 0; c < 3; ++c) {
      const auto rc = rigid_field.channel(c);
      for (std::size_t i = 0; i < n; ++i) u_def[static_cast<std::size_t>(c)][i] += rc[i];
    }
  ev.terms.smoothness = smooth_and_grad(u_def, grid, lambda, want_grad ? &dl_du : nullptr);
  ev.terms.total = ev.terms.similarity + lambda * ev.terms.smoothness;

  if (want_grad) {
    const std::size_t np = g.point_count();
    ev.grad.assign(3 * np, 0.0);
    for (int z = 0; z < grid.dims[2]; ++z)
      for (int y = 0; y < grid.dims[1]; ++y)
        for (int x = 0; x < grid.dims[0]; ++x) {
          const std::size_t i = grid.index(x, y, z);
          const double d0 = dl_du[0][i], d1 = dl_du[1][i], d2 = dl_du[2][i];
          up.for_each(g, x, y, z, [&](std::size_t p, double w) {
            ev.grad[p] += w * d0;
            ev.grad[np + p] += w * d1;
            ev.grad[2 * np + p] += w * d2;
          });
        }
  }
  return ev;
}

}  // namespace

DisplacementField upsample_grid(const ControlGrid& g, const Grid& grid) {
  const Upsampler up(g, grid);
  const auto u = upsample_double(g, grid, up);
  DisplacementField f(grid);
  for (int c = 0; c < 3; ++c) {
    auto dst = f.channel(c);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(u[static_cast<std::size_t>(c)][i]);
  }
  return f;
}

ObjectiveTerms objective_terms(const DescriptorVolume& fixed, const DescriptorVolume& moving, const ControlGrid& g,
                               const DisplacementField& rigid_field, double lambda, SmoothTarget target) {
  return evaluate(fixed, moving, g, rigid_field, lambda, target, false).terms;
}

double objective(const DescriptorVolume& fixed, const DescriptorVolume& moving, const ControlGrid& g,
                 const DisplacementField& rigid_field, double lambda, SmoothTarget target) {
  return objective_terms(fixed, moving, g, rigid_field, lambda, target).total;
}

std::vector<double> objective_gradient(const DescriptorVolume& fixed, const DescriptorVolume& moving,
                                       const ControlGrid& g, const DisplacementField& rigid_field, double lambda,
                                       SmoothTarget target) {
  return evaluate(fixed, moving, g, rigid_field, lambda, target, true).grad;
}

void DeformableOptions::validate() const {
  if (!(lambda >= 0.0)) throw ArgumentError("lambda must be >= 0");
  if (!(step_size > 0.0)) throw ArgumentError("step_size must be positive");
  if (max_iters < 1) throw ArgumentError("max_iters must be >= 1");
  if (!(grid_spacing_vox > 0.0)) throw ArgumentError("grid spacing must be positive");
  if (!(grad_tol >= 0.0)) throw ArgumentError("grad_tol must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ArgumentError("Adam betas must be in [0, 1)");
}

DeformableResult optimize_deformable(const DescriptorVolume& fixed, const DescriptorVolume& moving,
                                     const DisplacementField& rigid_field, const DeformableOptions& opts) {
  opts.validate();
  ControlGrid g = ControlGrid::covering(fixed.grid(), opts.grid_spacing_vox);
  DeformableResult out;
  out.grid = g;

  std::vector<double> m(g.values.size(), 0.0), v(g.values.size(), 0.0);
  double best = std::numeric_limits<double>::infinity();
  double b1t = 1.0, b2t = 1.0;

  for (int it = 1; it <= opts.max_iters; ++it) {
    const Evaluation ev = evaluate(fixed, moving, g, rigid_field, opts.lambda, opts.smooth_target, true);
    out.iterations = it;
    if (!std::isfinite(ev.terms.total))
      throw NumericalError("deformable optimisation: non-finite loss at iteration " + std::to_string(it));
    out.loss_trace.push_back(ev.terms.total);
    if (ev.terms.total < best) {
      best = ev.terms.total;
      out.grid = g;
    }
    out.best_trace.push_back(best);

    double gnorm2 = 0.0;
    for (double x : ev.grad) gnorm2 += x * x;
    if (std::sqrt(gnorm2) <= opts.grad_tol) {
      out.converged = true;
      break;
    }

    b1t *= opts.beta1;
    b2t *= opts.beta2;
    for (std::size_t j = 0; j < g.values.size(); ++j) {
      m[j] = opts.beta1 * m[j] + (1 - opts.beta1) * ev.grad[j];
      v[j] = opts.beta2 * v[j] + (1 - opts.beta2) * ev.grad[j] * ev.grad[j];
      const double mh = m[j] / (1 - b1t);
      const double vh = v[j] / (1 - b2t);
      g.values[j] -= opts.step_size * mh / (std::sqrt(vh) + opts.epsilon);
    }
  }
  out.field = upsample_grid(out.grid, fixed.grid());
  return out;
}

}  // namespace hybridreg
