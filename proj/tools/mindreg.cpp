// mindreg command-line driver: register / warp / evaluate / phantom / mind.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "mindreg/descriptor.hpp"
#include "mindreg/io.hpp"
#include "mindreg/metrics.hpp"
#include "mindreg/parallel.hpp"
#include "mindreg/phantom.hpp"
#include "mindreg/sampling.hpp"
#include "mindreg/solver.hpp"

namespace fs = std::filesystem;
using namespace mindreg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io:
    case ErrorCode::MalformedHeader:
    case ErrorCode::ElementCountMismatch:
    case ErrorCode::UnsupportedElementType:
      return kExitIo;
    case ErrorCode::NumericFailure:
      return kExitNumeric;
    case ErrorCode::InvalidArgument:
    case ErrorCode::GeometryMismatch:
    case ErrorCode::EmptyMask:
      return kExitUsage;
  }
  return kExitUsage;
}

int report_error(int exit_code, const std::string& kind, const std::string& message) {
  const nlohmann::json j = {{"code", exit_code}, {"kind", kind}, {"message", message}};
  std::cerr << j.dump() << std::endl;
  return exit_code;
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorCode::Io, "failed writing " + path.string());
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidArgument, std::string("cannot parse ") + what + " value '" + item + "'");
    }
  }
  return out;
}

struct RegisterArgs {
  std::string fixed, moving, out_field, out_warped, report;
  std::vector<std::string> probs;
  std::string iters;
  RegistrationParams params;
};

int run_register(RegisterArgs& a) {
  RegistrationParams& p = a.params;
  if (!a.iters.empty()) {
    p.max_iters.clear();
    for (double v : parse_list(a.iters, "--iters")) {
      require(v >= 0 && v == static_cast<int>(v), ErrorCode::InvalidArgument, "--iters takes non-negative integers");
      p.max_iters.push_back(static_cast<int>(v));
    }
  } else if (static_cast<int>(p.max_iters.size()) != p.levels) {
    // keep the finest-level budget, coarser levels get the coarse budget
    std::vector<int> iters(static_cast<std::size_t>(std::max(p.levels, 1)), RegistrationParams{}.max_iters.front());
    iters.back() = RegistrationParams{}.max_iters.back();
    p.max_iters = iters;
  }
  p.validate();

  const ScalarVolume fixed = read_volume(a.fixed);
  const ScalarVolume moving = read_volume(a.moving);
  std::vector<ScalarVolume> probs;
  for (const auto& path : a.probs) probs.push_back(read_volume(path));

  const RegistrationResult result = register_volumes(fixed, moving, probs, p);
  write_field(result.field, a.out_field);
  write_volume(warp(moving, result.field), a.out_warped);
  nlohmann::json report = result.report.to_json();
  report["params"] = {{"alpha", p.alpha},   {"tau", p.tau},           {"kappa", p.kappa},
                      {"levels", p.levels}, {"max_iters", p.max_iters}, {"stop_tol", p.stop_tol},
                      {"sigma_omega", p.sigma_omega}, {"threads", thread_count()}};
  write_json(report, a.report);
  return kExitOk;
}

struct WarpArgs {
  std::string in, field, out;
  bool mask = false;
};

int run_warp(const WarpArgs& a) {
  const DisplacementField field = read_field(a.field);
  if (a.mask)
    write_mask(propagate_mask(read_mask(a.in), field), a.out);
  else
    write_volume(warp(read_volume(a.in), field), a.out);
  return kExitOk;
}

struct EvaluateArgs {
  std::string fixed_mask, moving_mask, field, spacing_from, out, fixed, moving;
  bool directed = false;
};

int run_evaluate(const EvaluateArgs& a) {
  const BinaryMask fixed_mask = read_mask(a.fixed_mask);
  const BinaryMask moving_mask = read_mask(a.moving_mask);
  std::optional<DisplacementField> field;
  if (!a.field.empty()) field = read_field(a.field);
  const BinaryMask propagated = field ? propagate_mask(moving_mask, *field) : moving_mask;
  const Eigen::Vector3d spacing = read_volume(a.spacing_from).grid().spacing;

  const SurfaceDistanceStats sd = surface_distance(
      propagated, fixed_mask, spacing,
      a.directed ? SurfaceDistanceMode::Directed : SurfaceDistanceMode::Symmetric);
  nlohmann::json j = {{"dsc", dsc(fixed_mask, propagated)},
                      {"sd_mean_mm", sd.mean},
                      {"sd_std_mm", sd.std},
                      {"hausdorff_mm", sd.max},
                      {"ssim", nullptr},
                      {"ncc", nullptr}};
  if (!a.fixed.empty() && !a.moving.empty()) {
    const ScalarVolume fixed = read_volume(a.fixed);
    ScalarVolume moving = read_volume(a.moving);
    if (field) moving = warp(moving, *field);
    j["ssim"] = ssim(fixed, moving);
    j["ncc"] = ncc(fixed, moving);
  }
  write_json(j, a.out);
  std::cout << j.dump() << std::endl;
  return kExitOk;
}

struct PhantomArgs {
  std::string kind = "slab";
  int dims = 64;
  std::uint64_t seed = 1;
  std::string out_dir;
  std::string shift = "3,0,0";
  double amplitude = 4.0;
  double sigma = 10.0;
  double contrast = 0.0;
};

int run_phantom(const PhantomArgs& a) {
  PhantomCase pc;
  if (a.kind == "slab") {
    SlabPhantomParams p;
    p.dims.setConstant(a.dims);
    const auto s = parse_list(a.shift, "--shift");
    require(s.size() == 1 || s.size() == 3, ErrorCode::InvalidArgument, "--shift takes one value (x) or three (x,y,z)");
    p.shift = s.size() == 1 ? Eigen::Vector3d(s[0], 0.0, 0.0) : Eigen::Vector3d(s[0], s[1], s[2]);
    p.contrast_delta = a.contrast;
    p.seed = a.seed;
    pc = sliding_slab_phantom(p);
  } else {
    BumpPhantomParams p;
    p.dims.setConstant(a.dims);
    p.amplitude = a.amplitude;
    p.sigma = a.sigma;
    p.contrast_delta = a.contrast;
    p.seed = a.seed;
    pc = gaussian_bump_phantom(p);
  }

  const fs::path dir(a.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  write_volume(pc.fixed, dir / "fixed.mhd");
  write_volume(pc.moving, dir / "moving.mhd");
  write_volume(pc.probability, dir / "probability.mhd");
  write_field(pc.gt_field, dir / "gt_field.mhd");
  write_mask(pc.mask, dir / "mask.mhd");
  write_mask(pc.moving_mask, dir / "moving_mask.mhd");
  const nlohmann::json manifest = {{"kind", a.kind},
                                   {"seed", a.seed},
                                   {"parameters", pc.parameters},
                                   {"files",
                                    {{"fixed", "fixed.mhd"},
                                     {"moving", "moving.mhd"},
                                     {"probability", "probability.mhd"},
                                     {"gt_field", "gt_field.mhd"},
                                     {"mask", "mask.mhd"},
                                     {"moving_mask", "moving_mask.mhd"}}}};
  write_json(manifest, dir / "manifest.json");
  return kExitOk;
}

struct MindArgs {
  std::string in, out_stem;
};

int run_mind(const MindArgs& a) {
  const MindDescriptorField m = mind(read_volume(a.in));
  for (Index c = 0; c < m.channels(); ++c)
    write_volume(m.channel(c), a.out_stem + "_mind_" + std::to_string(c) + ".mhd");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deformable registration with self-similarity descriptors and sliding-boundary regularization"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--threads", threads, "Worker threads for the voxel kernels")->check(CLI::PositiveNumber);

  RegisterArgs reg;
  auto* reg_cmd = app.add_subcommand("register", "Register a moving volume onto a fixed volume");
  reg_cmd->add_option("--fixed", reg.fixed, "Fixed (target) volume")->required();
  reg_cmd->add_option("--moving", reg.moving, "Moving (source) volume")->required();
  reg_cmd->add_option("--prob", reg.probs, "Organ probability map or binary mask on the fixed grid (repeatable)");
  reg_cmd->add_option("--alpha", reg.params.alpha, "Regularization weight");
  reg_cmd->add_option("--tau", reg.params.tau, "Step size (tau * alpha <= 1/6)");
  reg_cmd->add_option("--kappa", reg.params.kappa, "Force stabilizer");
  reg_cmd->add_option("--levels", reg.params.levels, "Pyramid levels");
  reg_cmd->add_option("--iters", reg.iters, "Iterations per level, coarse to fine, comma separated")
      ->default_str("100,100,50");
  reg_cmd->add_option("--sigma-omega", reg.params.sigma_omega, "Boundary weight width in voxels");
  reg_cmd->add_option("--stop-tol", reg.params.stop_tol, "Mean update magnitude threshold in voxels");
  reg_cmd->add_option("--out-field", reg.out_field, "Output displacement field")->required();
  reg_cmd->add_option("--out-warped", reg.out_warped, "Output warped moving volume")->required();
  reg_cmd->add_option("--report", reg.report, "Output registration report (JSON)")->required();

  WarpArgs wa;
  auto* warp_cmd = app.add_subcommand("warp", "Apply a displacement field to a volume or mask");
  warp_cmd->add_option("--in", wa.in, "Input volume")->required();
  warp_cmd->add_option("--field", wa.field, "Displacement field")->required();
  warp_cmd->add_option("--out", wa.out, "Output volume")->required();
  warp_cmd->add_flag("--mask", wa.mask, "Treat the input as a binary mask (re-threshold at 0.5)");

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "Overlap, surface distance and image similarity");
  eval_cmd->add_option("--fixed-mask", ev.fixed_mask, "Target structure in the fixed frame")->required();
  eval_cmd->add_option("--moving-mask", ev.moving_mask, "Target structure in the moving frame")->required();
  eval_cmd->add_option("--field", ev.field, "Displacement field used to propagate the moving mask");
  eval_cmd->add_option("--spacing-from", ev.spacing_from, "Volume whose voxel spacing is used for distances")
      ->required();
  eval_cmd->add_option("--fixed", ev.fixed, "Fixed volume (enables ssim/ncc)");
  eval_cmd->add_option("--moving", ev.moving, "Moving volume (enables ssim/ncc)");
  eval_cmd->add_flag("--directed", ev.directed, "One-directional surface distance (propagated to fixed)");
  eval_cmd->add_option("--out", ev.out, "Output metrics (JSON)")->required();

  PhantomArgs ph;
  auto* ph_cmd = app.add_subcommand("phantom", "Write a synthetic case with ground truth");
  ph_cmd->add_option("--kind", ph.kind, "slab or bump")->check(CLI::IsMember({"slab", "bump"}));
  ph_cmd->add_option("--dims", ph.dims, "Voxels per axis");
  ph_cmd->add_option("--seed", ph.seed, "Texture seed");
  ph_cmd->add_option("--out-dir", ph.out_dir, "Output directory")->required();
  ph_cmd->add_option("--shift", ph.shift, "Slab: tangential shift in voxels, x or x,y,z");
  ph_cmd->add_option("--amplitude", ph.amplitude, "Bump: peak displacement in voxels");
  ph_cmd->add_option("--sigma", ph.sigma, "Bump: width in voxels");
  ph_cmd->add_option("--contrast", ph.contrast, "Relative intensity change inside the organ");

  MindArgs ma;
  auto* mind_cmd = app.add_subcommand("mind", "Write the descriptor channels of a volume");
  mind_cmd->add_option("--in", ma.in, "Input volume")->required();
  mind_cmd->add_option("--out-stem", ma.out_stem, "Output stem; writes <stem>_mind_<k>.mhd")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error(kExitUsage, "usage", e.what());
  }

  try {
    set_thread_count(threads);
    if (*reg_cmd) return run_register(reg);
    if (*warp_cmd) return run_warp(wa);
    if (*eval_cmd) return run_evaluate(ev);
    if (*ph_cmd) return run_phantom(ph);
    if (*mind_cmd) return run_mind(ma);
  } catch (const Error& e) {
    return report_error(exit_code_for(e.code()), to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    return report_error(kExitIo, "error", e.what());
  }
  return kExitUsage;
}
