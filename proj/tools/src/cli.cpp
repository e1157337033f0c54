#include "hybridreg_cli/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "hybridreg/field.hpp"
#include "hybridreg/io.hpp"
#include "hybridreg/metrics.hpp"
#include "hybridreg/parallel.hpp"
#include "hybridreg/phantom.hpp"
#include "hybridreg/preprocess.hpp"
#include "hybridreg/register.hpp"
#include "hybridreg/resample.hpp"
#include "hybridreg_cli/msl_check.hpp"

namespace hybridreg::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Failure of a command before the library is reached: bad flags, unreadable
// config, missing required inputs.
class UsageError : public Error {
 public:
  using Error::Error;
};

json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

json rigid_json(const PerLabelRigid& r) {
  json j;
  j["label"] = r.label_id;
  j["rotation_rad"] = vec_json(r.params.rotation);
  j["rotation_deg"] = norm(r.params.rotation) * 180.0 / 3.14159265358979323846;
  j["translation_vox"] = vec_json(r.params.translation);
  j["center_vox"] = vec_json(r.params.center);
  j["initial_loss"] = r.initial_loss;
  j["final_loss"] = r.final_loss;
  j["iterations"] = r.iterations_used;
  j["translation_only"] = r.translation_only;
  j["degenerate"] = r.degenerate;
  return j;
}

json scores_json(const std::vector<LabelScore>& scores) {
  json a = json::array();
  for (const auto& s : scores) a.push_back({{"label", s.id}, {"value", s.value}});
  return a;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

// Runs an I/O step and prefixes failures with the step name.
template <class F>
auto io_stage(const char* stage, F&& fn) {
  try {
    return fn();
  } catch (const NumericalError&) {
    throw;
  } catch (const Error& e) {
    throw IoError(std::string(stage) + ": " + e.what());
  }
}

json read_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw FormatError("config " + path.string() + ": top level must be an object");
  return j;
}

// Flag value when given on the command line, else the config key, else the
// default. Config values must have the flag's type.
template <class T>
T resolve(const CLI::Option* flag, const std::optional<T>& value, const json& config, const char* key, T fallback) {
  if (flag->count() > 0 && value) return *value;
  if (config.contains(key)) {
    try {
      return config.at(key).get<T>();
    } catch (const json::exception&) {
      throw UsageError(std::string("config key '") + key + "' has the wrong type");
    }
  }
  return fallback;
}

std::string metrics_table(const RegistrationMetrics& m) {
  std::ostringstream s;
  s << std::fixed;
  if (m.has_label_metrics) {
    s << "label      dice    hd95(mm)\n";
    for (std::size_t i = 0; i < m.dice.per_label.size(); ++i) {
      s << std::left << std::setw(8) << m.dice.per_label[i].id << std::right << std::setprecision(4) << std::setw(8)
        << m.dice.per_label[i].value;
      double h = std::nan("");
      for (const auto& e : m.hd95.per_label)
        if (e.id == m.dice.per_label[i].id) h = e.value;
      s << std::setprecision(3) << std::setw(12) << h << "\n";
    }
    s << std::left << std::setw(8) << "mean" << std::right << std::setprecision(4) << std::setw(8) << m.dice.mean
      << std::setprecision(3) << std::setw(12) << m.hd95.mean << "\n";
  } else {
    s << "no label metrics (no labels)\n";
  }
  s << "neg-jacobian " << std::setprecision(4) << m.neg_jacobian_pct << " % of " << m.foreground_voxels
    << " foreground voxels\n";
  return s.str();
}

struct RegisterArgs {
  std::optional<std::string> fixed, moving, labels, moving_labels, out, config;
  std::optional<double> lambda, grid_spacing;
  std::optional<int> max_iters, threads;
  std::optional<std::uint64_t> seed;
  bool skip_rigid = false, smooth_on_hybrid = false;
  CLI::Option *o_fixed, *o_moving, *o_labels, *o_moving_labels, *o_out, *o_lambda, *o_grid, *o_iters, *o_threads,
      *o_seed, *o_skip, *o_smooth;
};

void add_register(CLI::App& app, RegisterArgs& a) {
  a.o_fixed = app.add_option("--fixed", a.fixed, "fixed image (.nii or .raw/.json)");
  a.o_moving = app.add_option("--moving", a.moving, "moving image");
  a.o_labels = app.add_option("--labels", a.labels, "fixed-image vertebra labels");
  a.o_moving_labels = app.add_option("--moving-labels", a.moving_labels, "moving-image labels, scored after warping");
  a.o_out = app.add_option("--out", a.out, "output directory");
  app.add_option("--config", a.config, "JSON config with keys named like the flags");
  a.o_lambda = app.add_option("--lambda", a.lambda, "smoothness weight (default 0.2)");
  a.o_grid = app.add_option("--grid-spacing", a.grid_spacing, "control grid spacing in voxels (default 4)");
  a.o_iters = app.add_option("--max-iters", a.max_iters, "deformable iterations (default 200)");
  a.o_threads = app.add_option("--threads", a.threads, "worker threads (default: hardware count)");
  a.o_seed = app.add_option("--seed", a.seed, "recorded in the report; registration itself is deterministic");
  a.o_skip = app.add_flag("--skip-rigid", a.skip_rigid, "deformable-only ablation");
  a.o_smooth = app.add_flag("--smooth-on-hybrid", a.smooth_on_hybrid,
                            "penalise the hybrid field instead of the deformable part");
}

int cmd_register(const RegisterArgs& a, std::ostream& out) {
  const json cfg = a.config ? read_config(*a.config) : json::object();
  static const char* known[] = {"fixed",      "moving",    "labels",  "moving-labels", "out",
                                "lambda",     "grid-spacing", "max-iters", "skip-rigid", "smooth-on-hybrid",
                                "threads",    "seed"};
  for (const auto& [key, _] : cfg.items())
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known))
      throw UsageError("unknown config key '" + key + "'");

  const std::string fixed_path = resolve(a.o_fixed, a.fixed, cfg, "fixed", std::string{});
  const std::string moving_path = resolve(a.o_moving, a.moving, cfg, "moving", std::string{});
  const std::string labels_path = resolve(a.o_labels, a.labels, cfg, "labels", std::string{});
  const std::string moving_labels_path = resolve(a.o_moving_labels, a.moving_labels, cfg, "moving-labels", std::string{});
  const std::string out_dir = resolve(a.o_out, a.out, cfg, "out", std::string{});
  for (const auto& [name, value] : {std::pair{"--fixed", fixed_path}, std::pair{"--moving", moving_path},
                                    std::pair{"--labels", labels_path}, std::pair{"--out", out_dir}})
    if (value.empty()) throw UsageError(std::string(name) + " is required");

  RegistrationOptions opts;
  opts.deformable.lambda = resolve(a.o_lambda, a.lambda, cfg, "lambda", opts.deformable.lambda);
  opts.deformable.grid_spacing_vox = resolve(a.o_grid, a.grid_spacing, cfg, "grid-spacing", opts.deformable.grid_spacing_vox);
  opts.deformable.max_iters = resolve(a.o_iters, a.max_iters, cfg, "max-iters", opts.deformable.max_iters);
  const bool skip = a.o_skip->count() > 0 ? a.skip_rigid : cfg.value("skip-rigid", false);
  const bool smooth_hybrid = a.o_smooth->count() > 0 ? a.smooth_on_hybrid : cfg.value("smooth-on-hybrid", false);
  opts.skip_rigid = skip;
  opts.deformable.smooth_target = smooth_hybrid ? SmoothTarget::kHybrid : SmoothTarget::kDeformable;
  const int threads = resolve(a.o_threads, a.threads, cfg, "threads", 0);
  const auto seed = resolve<std::uint64_t>(a.o_seed, a.seed, cfg, "seed", 0);
  if (threads < 0) throw UsageError("--threads must be >= 0");
  set_num_threads(threads);
  opts.deformable.validate();

  const auto t0 = std::chrono::steady_clock::now();
  const Volume fixed = io_stage("load", [&] { return load_volume(fixed_path); });
  const Volume moving = io_stage("load", [&] { return load_volume(moving_path); });
  const LabelVolume labels = io_stage("load", [&] { return load_labels(labels_path); });
  std::optional<LabelVolume> moving_labels;
  if (!moving_labels_path.empty()) moving_labels = io_stage("load", [&] { return load_labels(moving_labels_path); });
  const double load_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const RegistrationResult res =
      register_hybrid(fixed, moving, labels, opts, moving_labels ? &*moving_labels : nullptr);

  const fs::path dir(out_dir);
  io_stage("write", [&] {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    save_field(res.total_field, dir / "field.nii");
    save_volume(res.warped, dir / "warped.nii");
    if (res.warped_labels) save_labels(*res.warped_labels, dir / "warped_labels.nii");
    return 0;
  });

  json report;
  report["config"] = {
      {"fixed", fixed_path},
      {"moving", moving_path},
      {"labels", labels_path},
      {"moving-labels", moving_labels_path.empty() ? json(nullptr) : json(moving_labels_path)},
      {"lambda", opts.deformable.lambda},
      {"grid-spacing", opts.deformable.grid_spacing_vox},
      {"max-iters", opts.deformable.max_iters},
      {"skip-rigid", skip},
      {"smooth-on-hybrid", smooth_hybrid},
      {"threads", num_threads()},
      {"seed", seed},
      {"step-size", opts.deformable.step_size},
      {"grad-tol", opts.deformable.grad_tol},
      {"prereg", opts.prereg},
      {"mind", {{"patch-radius", opts.mind.patch_radius}, {"sigma", opts.mind.sigma}}},
      {"rigid",
       {{"max-iters", opts.rigid.max_iters},
        {"init-step-rot", opts.rigid.init_step_rot},
        {"init-step-trans", opts.rigid.init_step_trans},
        {"shrink-factor", opts.rigid.shrink_factor},
        {"tol", opts.rigid.tol},
        {"roi-margin", opts.rigid.roi_margin}}}};
  const Grid& g = fixed.grid();
  report["grid"] = {{"dims", {g.dims[0], g.dims[1], g.dims[2]}},
                    {"spacing", vec_json(g.spacing)},
                    {"origin", vec_json(g.origin)}};
  report["prereg"] = rigid_json(res.prereg);
  report["rigids"] = json::array();
  for (const auto& r : res.rigids) report["rigids"].push_back(rigid_json(r));
  report["deformable"] = {{"iterations", res.deformable.iterations},
                          {"converged", res.deformable.converged},
                          {"final_loss", res.deformable.best_trace.empty() ? 0.0 : res.deformable.best_trace.back()},
                          {"loss_trace", res.deformable.loss_trace},
                          {"best_trace", res.deformable.best_trace}};
  const auto& m = res.metrics;
  json metrics;
  if (m.has_label_metrics) {
    metrics["dice"] = {{"mean", m.dice.mean}, {"std", m.dice.std}, {"per_label", scores_json(m.dice.per_label)}};
    metrics["hd95_mm"] = {{"mean", m.hd95.mean}, {"per_label", scores_json(m.hd95.per_label)}};
  } else {
    metrics["dice"] = nullptr;
    metrics["hd95_mm"] = nullptr;
  }
  metrics["neg_jacobian_pct"] = m.neg_jacobian_pct;
  metrics["foreground_voxels"] = m.foreground_voxels;
  report["metrics"] = metrics;
  report["warnings"] = res.warnings;
  json outputs = {{"field", "field.nii"}, {"warped", "warped.nii"}};
  outputs["warped_labels"] = res.warped_labels ? json("warped_labels.nii") : json(nullptr);
  report["outputs"] = outputs;
  json timing = {{"load", load_seconds}};
  double total = load_seconds;
  for (const auto& st : res.timings) {
    timing[st.stage] = st.seconds;
    total += st.seconds;
  }
  timing["total"] = total;
  report["timing"] = timing;

  write_text(dir / "report.json", report.dump(2) + "\n");
  const std::string table = metrics_table(m);
  write_text(dir / "metrics.txt", table);
  for (const auto& w : res.warnings) out << "warning: " << w << "\n";
  out << table;
  return kExitOk;
}

struct PhantomArgs {
  std::uint64_t seed = 1;
  std::string out;
  std::vector<int> dims;
  std::optional<int> n_vertebrae;
  std::optional<double> max_rot, max_trans, amp, noise;
};

int cmd_phantom(const PhantomArgs& a, std::ostream& out) {
  PhantomSpec spec;
  spec.seed = a.seed;
  if (!a.dims.empty()) {
    if (a.dims.size() != 3) throw UsageError("--dims takes three integers");
    spec.dims = {a.dims[0], a.dims[1], a.dims[2]};
  }
  if (a.n_vertebrae) spec.n_vertebrae = *a.n_vertebrae;
  if (a.max_rot) spec.max_rot_deg = *a.max_rot;
  if (a.max_trans) spec.max_trans_vox = *a.max_trans;
  if (a.amp) spec.bg_field_amp_vox = *a.amp;
  if (a.noise) spec.noise_sigma = *a.noise;
  const PhantomPair p = make_phantom(spec);

  const fs::path dir(a.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  save_volume(p.fixed, dir / "fixed.nii");
  save_volume(p.moving, dir / "moving.nii");
  save_labels(p.fixed_labels, dir / "fixed_labels.nii");
  save_labels(p.moving_labels, dir / "moving_labels.nii");
  save_field(gt_hybrid_field(p), dir / "gt_field.nii");
  json rigids = json::array();
  for (std::size_t i = 0; i < p.gt_rigids.size(); ++i) {
    const auto& r = p.gt_rigids[i];
    rigids.push_back({{"label", i + 1},
                      {"rotation_rad", vec_json(r.rotation)},
                      {"translation_vox", vec_json(r.translation)},
                      {"center_vox", vec_json(r.center)}});
  }
  json doc = {{"seed", spec.seed},
              {"dims", {spec.dims[0], spec.dims[1], spec.dims[2]}},
              {"max_rot_deg", spec.max_rot_deg},
              {"max_trans_vox", spec.max_trans_vox},
              {"bg_field_amp_vox", spec.bg_field_amp_vox},
              {"bg_field_period_vox", spec.bg_field_period_vox},
              {"noise_sigma", spec.noise_sigma},
              {"rigids", rigids}};
  write_text(dir / "gt_rigids.json", doc.dump(2) + "\n");
  out << "phantom seed " << spec.seed << " written to " << dir.string() << "\n";
  return kExitOk;
}

struct WarpArgs {
  std::string input, field, out;
  bool labels = false;
};

int cmd_warp(const WarpArgs& a, std::ostream& out) {
  const DisplacementField f = load_field(a.field);
  if (a.labels) {
    save_labels(warp_labels(load_labels(a.input), f), a.out);
  } else {
    save_volume(warp_scalar(load_volume(a.input), f), a.out);
  }
  out << "warped " << a.input << " -> " << a.out << "\n";
  return kExitOk;
}

struct MetricsArgs {
  std::string fixed_labels, warped_labels;
  std::optional<std::string> field, out;
};

int cmd_metrics(const MetricsArgs& a, std::ostream& out) {
  const LabelVolume fl = load_labels(a.fixed_labels);
  const LabelVolume wl = load_labels(a.warped_labels);
  require_same_geometry(fl.grid(), wl.grid(), "metrics: fixed/warped labels");
  RegistrationMetrics m;
  m.has_label_metrics = true;
  m.dice = mean_dice(fl, wl);
  m.hd95 = hd95_per_label(fl, wl);
  json doc;
  doc["dice"] = {{"mean", m.dice.mean}, {"std", m.dice.std}, {"per_label", scores_json(m.dice.per_label)}};
  doc["hd95_mm"] = {{"mean", m.hd95.mean}, {"per_label", scores_json(m.hd95.per_label)}};
  if (a.field) {
    const DisplacementField f = load_field(*a.field);
    require_same_geometry(fl.grid(), f.grid(), "metrics: labels/field");
    const LabelVolume fg = jacobian_foreground(fl);
    m.foreground_voxels = fg.count(1);
    m.neg_jacobian_pct = neg_jacobian_pct(f, fg);
    doc["neg_jacobian_pct"] = m.neg_jacobian_pct;
    doc["foreground_voxels"] = m.foreground_voxels;
  }
  std::string table = metrics_table(m);
  if (!a.field) table = table.substr(0, table.rfind("neg-jacobian"));
  if (a.out) write_text(*a.out, doc.dump(2) + "\n");
  out << table;
  return kExitOk;
}

struct ConvertArgs {
  std::string input, output;
  bool labels = false;
  bool normalize = false;
};

int cmd_convert(const ConvertArgs& a, std::ostream& out) {
  if (a.labels) {
    if (a.normalize) throw UsageError("--normalize does not apply to label maps");
    save_labels(load_labels(a.input), a.output);
  } else {
    save_volume(a.normalize ? normalize_minmax(load_volume(a.input)) : load_volume(a.input), a.output);
  }
  out << "converted " << a.input << " -> " << a.output << "\n";
  return kExitOk;
}

int cmd_msl_check(std::uint64_t seed, std::ostream& out) {
  bool all = true;
  for (const auto& r : run_msl_suite(seed)) {
    out << (r.pass ? "PASS " : "FAIL ") << r.name << "  (" << r.detail << ": " << r.value << ", bound "
        << r.tolerance << ")\n";
    all = all && r.pass;
  }
  return all ? kExitOk : kExitNumerical;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"hybridreg: rigid-deformable hybrid registration with MIND similarity", "hybridreg"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "hybridreg 0.1.0");

  RegisterArgs reg;
  add_register(*app.add_subcommand("register", "register a moving image to a fixed image"), reg);

  PhantomArgs ph;
  auto* ph_cmd = app.add_subcommand("phantom", "write a synthetic vertebra phantom with ground truth");
  ph_cmd->add_option("--seed", ph.seed, "random seed")->capture_default_str();
  ph_cmd->add_option("--out", ph.out, "output directory")->required();
  ph_cmd->add_option("--dims", ph.dims, "grid size X Y Z")->expected(3);
  ph_cmd->add_option("--n-vertebrae", ph.n_vertebrae, "number of vertebrae");
  ph_cmd->add_option("--max-rot", ph.max_rot, "maximum rotation per vertebra, degrees");
  ph_cmd->add_option("--max-trans", ph.max_trans, "maximum translation per vertebra, voxels");
  ph_cmd->add_option("--amp", ph.amp, "background field amplitude, voxels");
  ph_cmd->add_option("--noise", ph.noise, "noise sigma on the [0,1] tissue scale");

  WarpArgs wa;
  auto* wa_cmd = app.add_subcommand("warp", "warp an image or label map by a displacement field");
  wa_cmd->add_option("--input", wa.input, "image or label map")->required();
  wa_cmd->add_option("--field", wa.field, "displacement field")->required();
  wa_cmd->add_option("--out", wa.out, "output path")->required();
  wa_cmd->add_flag("--labels", wa.labels, "nearest-neighbour label warp");

  MetricsArgs me;
  auto* me_cmd = app.add_subcommand("metrics", "Dice, HD95 and folding of a registration result");
  me_cmd->add_option("--fixed-labels", me.fixed_labels, "reference labels")->required();
  me_cmd->add_option("--warped-labels", me.warped_labels, "warped moving labels")->required();
  me_cmd->add_option("--field", me.field, "field for the negative-Jacobian percentage");
  me_cmd->add_option("--out", me.out, "JSON output path");

  ConvertArgs co;
  auto* co_cmd = app.add_subcommand("convert", "convert between .nii and .raw/.json");
  co_cmd->add_option("--input", co.input, "input path")->required();
  co_cmd->add_option("--output", co.output, "output path")->required();
  co_cmd->add_flag("--labels", co.labels, "treat the data as a label map");
  co_cmd->add_flag("--normalize", co.normalize, "min-max rescale intensities to [0, 1]");

  std::uint64_t msl_seed = 7;
  auto* msl_cmd = app.add_subcommand("msl-check", "run the Mamba-Swin layer property suite");
  msl_cmd->add_option("--seed", msl_seed, "parameter seed")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "register") return cmd_register(reg, out);
    if (cmd == "phantom") return cmd_phantom(ph, out);
    if (cmd == "warp") return cmd_warp(wa, out);
    if (cmd == "metrics") return cmd_metrics(me, out);
    if (cmd == "convert") return cmd_convert(co, out);
    return cmd_msl_check(msl_seed, out);
  } catch (const NumericalError& e) {
    err << "hybridreg " << cmd << ": numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const UsageError& e) {
    err << "hybridreg " << cmd << ": " << e.what() << "\n";
    return kExitInput;
  } catch (const Error& e) {
    err << "hybridreg " << cmd << ": " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "hybridreg " << cmd << ": " << e.what() << "\n";
    return kExitInput;
  }
}

}  // namespace hybridreg::cli
