#include "hybridreg/register.hpp"

#include <chrono>
#include <utility>

#include "hybridreg/resample.hpp"

namespace hybridreg {

namespace {

template <class E>
[[noreturn]] void rethrow_as(const char* stage, const E& e) {
  throw E(std::string(stage) + ": " + e.what());
}

// Runs one pipeline stage, records its wall time and prefixes errors with the
// stage name while keeping their type.
template <class F>
auto run_stage(const char* stage, std::vector<StageTiming>& timings, F&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  auto record = [&] {
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    timings.push_back({stage, dt.count()});
  };
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      record();
    } else {
      auto out = fn();
      record();
      return out;
    }
  } catch (const NumericalError& e) {
    rethrow_as(stage, e);
  } catch (const FormatError& e) {
    rethrow_as(stage, e);
  } catch (const IoError& e) {
    rethrow_as(stage, e);
  } catch (const ArgumentError& e) {
    rethrow_as(stage, e);
  } catch (const NotFoundError& e) {
    rethrow_as(stage, e);
  } catch (const DegenerateInputError& e) {
    rethrow_as(stage, e);
  } catch (const DataError& e) {
    rethrow_as(stage, e);
  } catch (const Error& e) {
    rethrow_as(stage, e);
  }
}

}  // namespace

RegistrationResult register_hybrid(const Volume& fixed, const Volume& moving, const LabelVolume& fixed_labels,
                                   const RegistrationOptions& opts, const LabelVolume* moving_labels) {
  RegistrationResult res;
  auto& t = res.timings;

  run_stage("validate", t, [&] {
    require_same_geometry(fixed.grid(), moving.grid(), "register: fixed/moving");
    require_same_geometry(fixed.grid(), fixed_labels.grid(), "register: fixed/labels");
    if (moving_labels) require_same_geometry(fixed.grid(), moving_labels->grid(), "register: fixed/moving labels");
    fixed.require_finite();
    moving.require_finite();
    opts.rigid.validate();
    opts.deformable.validate();
  });
  const Grid& grid = fixed.grid();
  const bool has_labels = !fixed_labels.label_ids().empty();
  if (!has_labels) res.warnings.push_back("no labels: rigid branch disabled, deformable-only registration");

  auto [fd, md] = run_stage("descriptors", t, [&] {
    return std::pair{mind_descriptor(fixed, opts.mind), mind_descriptor(moving, opts.mind)};
  });

  DescriptorVolume md_pre = md;
  res.prereg_field = DisplacementField(grid);
  if (opts.prereg) {
    run_stage("prereg", t, [&] {
      res.prereg = global_prereg(fd, md, opts.rigid);
      if (!res.prereg.params.is_identity()) {
        res.prereg_field = rigid_to_displacement(res.prereg.params, grid);
        md_pre = warp_descriptors(md, res.prereg_field);
      }
    });
  }

  res.rigid_field = DisplacementField(grid);
  if (has_labels && !opts.skip_rigid) {
    run_stage("rigid", t, [&] {
      res.rigids = estimate_all_labels(fd, md_pre, fixed_labels, opts.rigid);
      res.rigid_field = build_rigid_field(res.rigids, fixed_labels);
    });
  }

  res.deformable = run_stage("deformable", t,
                             [&] { return optimize_deformable(fd, md_pre, res.rigid_field, opts.deformable); });
  res.deformable_field = res.deformable.field;

  run_stage("fuse", t, [&] {
    res.hybrid_field = fuse_hybrid(res.deformable_field, res.rigid_field);
    res.total_field = opts.prereg ? compose_fields(res.prereg_field, res.hybrid_field) : res.hybrid_field;
    res.total_field.require_finite();
  });

  run_stage("warp", t, [&] {
    res.warped = warp_scalar(moving, res.total_field);
    if (moving_labels) {
      res.warped_labels = warp_labels(*moving_labels, res.total_field);
    } else if (has_labels) {
      res.warnings.push_back("no moving labels: fixed labels stand in for the moving segmentation");
      res.warped_labels = warp_labels(fixed_labels, res.total_field);
    }
  });

  run_stage("metrics", t, [&] {
    auto& m = res.metrics;
    if (has_labels && res.warped_labels) {
      m.has_label_metrics = true;
      m.dice = mean_dice(fixed_labels, *res.warped_labels);
      m.hd95 = hd95_per_label(fixed_labels, *res.warped_labels);
    }
    const LabelVolume fg = has_labels ? jacobian_foreground(fixed_labels)
                                      : LabelVolume(grid, std::vector<Label>(grid.voxel_count(), 1));
    m.foreground_voxels = fg.count(1);
    m.neg_jacobian_pct = neg_jacobian_pct(res.total_field, fg);
  });
  return res;
}

}  // namespace hybridreg
