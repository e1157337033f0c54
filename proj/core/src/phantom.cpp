#include "hybridreg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "hybridreg/parallel.hpp"
#include "hybridreg/rigid.hpp"

namespace hybridreg {

namespace {

constexpr double kTissueLow = 0.25;
constexpr double kBone = 1.0;
// Plain tissue separating each vertebra from the dense-tissue blobs.
constexpr double kRim = 3.0;
constexpr double kBlend = 3.0;
constexpr int kInvertIters = 80;
constexpr int kMaxDraws = 10000;
constexpr double kAxialShare = 0.25;

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const Vec3 v{n(rng), n(rng), n(rng)};
    const double len = norm(v);
    if (len > 1e-9) return (1.0 / len) * v;
  }
}

int depth_of(const PhantomSpec& s) { return std::max(3, s.vertebra_size * 3 / 4); }

}  // namespace

void PhantomSpec::validate() const {
  for (int a = 0; a < 3; ++a)
    if (dims[a] < 8) throw ArgumentError("phantom dims must be >= 8");
  if (n_vertebrae < 1) throw ArgumentError("phantom needs at least one vertebra");
  if (vertebra_size < 6 || vertebra_height < 3 || gap < 1) throw ArgumentError("phantom vertebra shape too small");
  const int column = n_vertebrae * vertebra_height + (n_vertebrae - 1) * gap;
  if (vertebra_size + 4 > dims[0] || depth_of(*this) + 4 > dims[2] || column + 4 > dims[1])
    throw ArgumentError("phantom vertebrae do not fit inside dims " + std::to_string(dims[0]) + "x" +
                        std::to_string(dims[1]) + "x" + std::to_string(dims[2]));
  if (!(max_rot_deg >= 0.0 && max_rot_deg <= 15.0)) throw ArgumentError("phantom max_rot_deg must be in [0, 15]");
  if (!(max_trans_vox >= 0.0 && std::isfinite(max_trans_vox))) throw ArgumentError("phantom max_trans_vox must be >= 0");
  if (!(bg_field_amp_vox >= 0.0 && std::isfinite(bg_field_amp_vox)))
    throw ArgumentError("phantom bg_field_amp_vox must be >= 0");
  if (!(bg_field_period_vox > 0.0)) throw ArgumentError("phantom bg_field_period_vox must be positive");
  if (!(noise_sigma >= 0.0 && std::isfinite(noise_sigma))) throw ArgumentError("phantom noise_sigma must be >= 0");
}

PhantomModel::PhantomModel(const PhantomSpec& spec) : spec_(spec) {
  spec_.validate();
  const auto& d = spec_.dims;
  const int size = spec_.vertebra_size;
  const int depth = depth_of(spec_);
  const int column = spec_.n_vertebrae * spec_.vertebra_height + (spec_.n_vertebrae - 1) * spec_.gap;
  const double x0 = (d[0] - size) / 2 - 0.5;
  const double z0 = (d[2] - depth) / 2 - 0.5;
  const int y0 = (d[1] - column) / 2;
  const int notch_w = std::max(1, size / 3);
  const int notch_d = std::max(1, depth / 3);
  for (int i = 0; i < spec_.n_vertebrae; ++i) {
    BoxShape b;
    const double ylo = y0 + i * (spec_.vertebra_height + spec_.gap) - 0.5;
    b.lo = {x0, ylo, z0};
    b.hi = {x0 + size, ylo + spec_.vertebra_height, z0 + depth};
    b.notch_lo = {x0 + (size - notch_w) / 2, ylo - 1.0, z0 + depth - notch_d};
    b.notch_hi = {b.notch_lo[0] + notch_w, b.hi[1] + 1.0, b.hi[2] + 1.0};
    const double nz = b.notch_lo[2];
    b.parts[0] = {b.lo, Vec3{b.hi[0], b.hi[1], nz}};
    b.parts[1] = {Vec3{b.lo[0], b.lo[1], nz}, Vec3{b.notch_lo[0], b.hi[1], b.hi[2]}};
    b.parts[2] = {Vec3{b.notch_hi[0], b.lo[1], nz}, b.hi};
    boxes_.push_back(b);
  }

  std::mt19937_64 rng(spec_.seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (int a = 0; a < 3; ++a) tex_phase_[a] = phase(rng);
  for (int a = 0; a < 3; ++a) bg_phase_a_[a] = phase(rng);
  for (int a = 0; a < 3; ++a) bg_phase_b_[a] = phase(rng);

  // Rotation centres are the centroids of the rendered fixed labels.
  std::vector<Vec3> centroids;
  for (int i = 0; i < spec_.n_vertebrae; ++i) {
    const auto& b = boxes_[static_cast<std::size_t>(i)];
    Vec3 sum{0, 0, 0};
    double n = 0;
    Index3 lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(0, static_cast<int>(std::floor(b.lo[a])));
      hi[a] = std::min(d[a] - 1, static_cast<int>(b.hi[a]));
    }
    for (int z = lo[2]; z <= hi[2]; ++z)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int x = lo[0]; x <= hi[0]; ++x) {
          const Vec3 p{double(x), double(y), double(z)};
          if (in_vertebra(i, p)) {
            sum = sum + p;
            n += 1;
          }
        }
    centroids.push_back((1.0 / n) * sum);
  }
  sample_motions(centroids);
  for (const auto& r : rigids_) rot_.push_back(r.matrix());
}

void PhantomModel::sample_motions(const std::vector<Vec3>& centroids) {
  std::mt19937_64 rng(spec_.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double max_rot = spec_.max_rot_deg * std::numbers::pi / 180.0;
  const auto& d = spec_.dims;
  for (std::size_t i = 0; i < boxes_.size(); ++i) {
    const auto& b = boxes_[i];
    bool placed = false;
    for (int draw = 0; draw < kMaxDraws && !placed; ++draw) {
      RigidParams p;
      p.center = centroids[i];
      p.rotation = (unit(rng) * max_rot) * random_unit(rng);
      // Vertebrae slide mostly across the stacking axis.
      Vec3 dir = random_unit(rng);
      dir[1] *= kAxialShare;
      p.translation = (unit(rng) * spec_.max_trans_vox / norm(dir)) * dir;
      double lo_y = 1e9, hi_y = -1e9;
      bool inside = true;
      for (int corner = 0; corner < 8; ++corner) {
        const Vec3 c{corner & 1 ? b.hi[0] : b.lo[0], corner & 2 ? b.hi[1] : b.lo[1], corner & 4 ? b.hi[2] : b.lo[2]};
        const Vec3 m = p.apply(c);
        for (int a = 0; a < 3; ++a)
          if (m[a] < 0.5 || m[a] > d[a] - 1.5) inside = false;
        lo_y = std::min(lo_y, m[1]);
        hi_y = std::max(hi_y, m[1]);
      }
      // Keep moved vertebrae apart and the first one off the previous top.
      // Each vertebra may move at most a quarter of the gap along the stack, so
      // neighbours stay apart and the tissue blend between them cannot fold.
      const double room = spec_.gap / 4.0;
      if (inside && lo_y >= b.lo[1] - room && hi_y <= b.hi[1] + room) {
        rigids_.push_back(p);
        placed = true;
      }
    }
    if (!placed)
      throw ArgumentError("phantom motion ranges too large for the vertebra gap (vertebra " + std::to_string(i + 1) +
                          ")");
  }
}

bool PhantomModel::in_vertebra(int i, const Vec3& x) const {
  const auto& b = boxes_.at(static_cast<std::size_t>(i));
  for (int a = 0; a < 3; ++a)
    if (x[a] < b.lo[a] || x[a] > b.hi[a]) return false;
  bool in_notch = true;
  for (int a = 0; a < 3; ++a)
    if (x[a] <= b.notch_lo[a] || x[a] >= b.notch_hi[a]) in_notch = false;
  return !in_notch;
}

Label PhantomModel::label_at(const Vec3& x) const {
  for (int i = 0; i < vertebra_count(); ++i)
    if (in_vertebra(i, x)) return static_cast<Label>(i + 1);
  return 0;
}

double PhantomModel::box_distance(std::size_t i, const Vec3& x, Vec3* closest) const {
  double best = 1e300;
  for (const auto& [lo, hi] : boxes_[i].parts) {
    const Vec3 c{std::clamp(x[0], lo[0], hi[0]), std::clamp(x[1], lo[1], hi[1]), std::clamp(x[2], lo[2], hi[2])};
    const double dist = norm(x - c);
    if (dist < best) {
      best = dist;
      if (closest) *closest = c;
    }
  }
  return best;
}

double PhantomModel::distance_to_vertebrae(const Vec3& x) const {
  double best = 1e300;
  for (std::size_t i = 0; i < boxes_.size(); ++i) best = std::min(best, box_distance(i, x));
  return best;
}

double PhantomModel::base_intensity(const Vec3& x) const {
  if (label_at(x) != 0) return kBone;
  if (distance_to_vertebrae(x) <= kRim) return kTissueLow;
  // Dense tissue shares the bone intensity, keeping the image two-level.
  const double k = 2.0 * std::numbers::pi / tex_period_;
  const double s = std::sin(k * x[0] + tex_phase_[0]) * std::sin(k * x[1] + tex_phase_[1]) *
                   std::sin(k * x[2] + tex_phase_[2]);
  return s > 0.0 ? kBone : kTissueLow;
}

Vec3 PhantomModel::background_displacement(const Vec3& x) const {
  const double k = 2.0 * std::numbers::pi / spec_.bg_field_period_vox;
  Vec3 sine{0, 0, 0};
  if (spec_.bg_field_amp_vox > 0.0) {
    for (int a = 0; a < 3; ++a) {
      const int b = (a + 1) % 3;
      const int c = (a + 2) % 3;
      sine[a] = spec_.bg_field_amp_vox * std::sin(k * x[b] + bg_phase_a_[a]) * std::cos(k * x[c] + bg_phase_b_[a]);
    }
  }
  // Tissue next to a vertebra takes the normal component of its motion, so
  // nothing opens or overlaps at the surface, but slides freely along it.
  Vec3 carried{0, 0, 0};
  double total = 0.0;
  for (std::size_t i = 0; i < boxes_.size() && i < rigids_.size(); ++i) {
    Vec3 closest;
    const double dist = box_distance(i, x, &closest);
    const double v = 1.0 - smoothstep(dist / kBlend);
    if (v == 0.0) continue;
    const auto& r = rigids_[i];
    const Vec3 rel = rot_[i] * (x - r.center) + r.center + r.translation - x - sine;
    if (dist == 0.0) {
      carried = carried + v * rel;
    } else {
      const Vec3 n = (1.0 / dist) * (x - closest);
      carried = carried + (v * dot(n, rel)) * n;
    }
    total += v;
  }
  return sine + (1.0 / std::max(1.0, total)) * carried;
}

Vec3 PhantomModel::invert_background(const Vec3& y, const Vec3& guess) const {
  // Fixed point on x + u(x) = y. Plain iteration converges away from the
  // vertebrae; the damped form takes over where the blend compresses tissue.
  Vec3 x = guess;
  for (int it = 0; it < kInvertIters; ++it) {
    const Vec3 r = y - x - background_displacement(x);
    if (norm(r) < 1e-5) return x;
    x = x + (it < kInvertIters / 4 ? 1.0 : 0.5) * r;
  }
  return x;
}

double fixed_modality(double base) { return 800.0 * base - 100.0; }
double moving_modality(double base) { return 500.0 * (1.0 - std::exp(-3.0 * base)); }

PhantomPair make_phantom(const PhantomSpec& spec) {
  const PhantomModel model(spec);
  Grid grid;
  grid.dims = spec.dims;
  const std::size_t n = grid.voxel_count();
  std::vector<float> fixed(n), moving(n);
  std::vector<Label> fixed_lab(n), moving_lab(n);
  DisplacementField bg(grid);

  std::vector<Mat3> inv_rot;
  for (const auto& r : model.rigids()) inv_rot.push_back(transpose(r.matrix()));
  auto moving_label = [&](const Vec3& p) -> Label {
    for (int v = 0; v < model.vertebra_count(); ++v) {
      const auto& r = model.rigids()[static_cast<std::size_t>(v)];
      const Vec3 src = inv_rot[static_cast<std::size_t>(v)] * (p - r.center - r.translation) + r.center;
      if (model.in_vertebra(v, src)) return static_cast<Label>(v + 1);
    }
    return 0;
  };
  // Tissue intensity at a fixed-space pre-image. Bone from the fixed image must
  // not leak through the inverse.
  auto tissue_level = [&](const Vec3& pre) { return model.label_at(pre) != 0 ? kTissueLow : model.base_intensity(pre); };

  // Partial-volume rendering: probe the voxel centre and corners, and average
  // the remapped intensity over a subsample lattice when they disagree.
  constexpr int kSub = 4;
  auto render = [&](const Vec3& c, auto&& level, double (*remap)(double)) {
    const double centre = level(c);
    bool mixed = false;
    for (int k = 0; k < 8 && !mixed; ++k) {
      const Vec3 q{c[0] + (k & 1 ? 0.5 : -0.5), c[1] + (k & 2 ? 0.5 : -0.5), c[2] + (k & 4 ? 0.5 : -0.5)};
      mixed = level(q) != centre;
    }
    if (!mixed) return remap(centre);
    double sum = 0.0;
    for (int a = 0; a < kSub; ++a)
      for (int b = 0; b < kSub; ++b)
        for (int e = 0; e < kSub; ++e) {
          const Vec3 q{c[0] + (e + 0.5) / kSub - 0.5, c[1] + (b + 0.5) / kSub - 0.5, c[2] + (a + 0.5) / kSub - 0.5};
          sum += remap(level(q));
        }
    return sum / (kSub * kSub * kSub);
  };

  const auto& d = spec.dims;
  parallel_for(0, d[2], [&](int z) {
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        const std::size_t i = grid.index(x, y, z);
        const Vec3 p{double(x), double(y), double(z)};
        fixed_lab[i] = model.label_at(p);
        bg.set(i, fixed_lab[i] != 0 ? Vec3{0, 0, 0} : model.background_displacement(p));
        moving_lab[i] = moving_label(p);
        fixed[i] = static_cast<float>(
            render(p, [&](const Vec3& q) { return model.base_intensity(q); }, fixed_modality));
        // Inside one voxel the background pre-image is linearised about the
        // centre; the field is smooth wherever the tissue is not uniform.
        const Vec3 pre = model.invert_background(p);
        Mat3 jinv{};
        bool have_jinv = false;
        moving[i] = static_cast<float>(render(
            p,
            [&](const Vec3& q) {
              if (moving_label(q) != 0) return kBone;
              if (!have_jinv) {
                constexpr double h = 0.25;
                for (int a = 0; a < 3; ++a) {
                  Vec3 e = p;
                  e[a] += h;
                  const Vec3 col = (1.0 / h) * (model.invert_background(e, pre) - pre);
                  for (int r = 0; r < 3; ++r) jinv[r][a] = col[r];
                }
                have_jinv = true;
              }
              return tissue_level(pre + jinv * (q - p));
            },
            moving_modality));
      }
  });

  if (spec.noise_sigma > 0.0) {
    std::mt19937_64 rng(spec.seed ^ 0xd1b54a32d192ed03ULL);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    const double fixed_range = fixed_modality(1.0) - fixed_modality(0.0);
    const double moving_range = moving_modality(1.0) - moving_modality(0.0);
    for (auto& v : fixed) v = static_cast<float>(v + fixed_range * noise(rng));
    for (auto& v : moving) v = static_cast<float>(v + moving_range * noise(rng));
  }

  PhantomPair pair{Volume(grid, std::move(fixed)),
                   Volume(grid, std::move(moving)),
                   LabelVolume(grid, std::move(fixed_lab)),
                   LabelVolume(grid, std::move(moving_lab)),
                   model.rigids(),
                   std::move(bg)};
  return pair;
}

DisplacementField gt_hybrid_field(const PhantomPair& pair) {
  std::vector<PerLabelRigid> est;
  for (std::size_t i = 0; i < pair.gt_rigids.size(); ++i) {
    const auto id = static_cast<Label>(i + 1);
    if (!pair.fixed_labels.has_label(id)) continue;
    PerLabelRigid r;
    r.label_id = id;
    r.params = pair.gt_rigids[i];
    est.push_back(r);
  }
  if (est.empty()) return pair.gt_bg_field;
  return fuse_hybrid(pair.gt_bg_field, build_rigid_field(est, pair.fixed_labels));
}

}  // namespace hybridreg
