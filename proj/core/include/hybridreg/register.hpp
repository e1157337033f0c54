#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hybridreg/deformable.hpp"
#include "hybridreg/metrics.hpp"
#include "hybridreg/mind.hpp"
#include "hybridreg/rigid.hpp"

namespace hybridreg {

struct RegistrationOptions {
  MindOptions mind{};
  RigidEstimateOptions rigid{};
  DeformableOptions deformable{};
  bool prereg = true;       // global rigid pre-registration stage
  bool skip_rigid = false;  // deformable-only ablation
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RegistrationMetrics {
  bool has_label_metrics = false;
  DiceSummary dice;
  Hd95Summary hd95;
  double neg_jacobian_pct = 0.0;
  std::size_t foreground_voxels = 0;
};

struct RegistrationResult {
  PerLabelRigid prereg{};
  std::vector<PerLabelRigid> rigids;
  DisplacementField prereg_field;
  DisplacementField rigid_field;
  DisplacementField deformable_field;
  DisplacementField hybrid_field;  // deformable + rigid
  DisplacementField total_field;   // hybrid composed with the pre-registration
  Volume warped;
  std::optional<LabelVolume> warped_labels;
  RegistrationMetrics metrics;
  DeformableResult deformable;
  std::vector<StageTiming> timings;
  std::vector<std::string> warnings;
};

// Descriptors -> global pre-registration -> per-label rigid estimates ->
// masked rigid field -> deformable optimisation -> additive fusion -> warp.
// `moving_labels`, when given, are warped and scored against `fixed_labels`.
// Errors from a stage are rethrown with the stage name prefixed.
RegistrationResult register_hybrid(const Volume& fixed, const Volume& moving, const LabelVolume& fixed_labels,
                                   const RegistrationOptions& opts, const LabelVolume* moving_labels = nullptr);

}  // namespace hybridreg
