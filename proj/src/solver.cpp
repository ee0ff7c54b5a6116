#include "mindreg/solver.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "mindreg/force.hpp"
#include "mindreg/parallel.hpp"
#include "mindreg/regularization.hpp"
#include "mindreg/sampling.hpp"

namespace mindreg {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

inline float updated(float u, float f, float c, double tau, double alpha) {
  return static_cast<float>(static_cast<double>(u) +
                            tau * (static_cast<double>(f) + alpha * static_cast<double>(c)));
}

struct UpdateStats {
  double mean_magnitude;
  bool finite;
  double max_abs;
};

// In-place u <- u + tau (f + alpha c); returns the mean per-voxel update
// magnitude and a finiteness check of the new iterate.
UpdateStats apply_update(DisplacementField& u, const DisplacementField& f, const DisplacementField& c, double tau,
                         double alpha) {
  const Grid& g = u.grid();
  std::vector<double> max_abs(static_cast<std::size_t>(g.nz()), 0.0);
  std::vector<char> finite(static_cast<std::size_t>(g.nz()), 1);
  const double total = ordered_sum(g.nz(), [&](Index z) {
    double acc = 0.0, mx = 0.0;
    bool ok = true;
    const Index begin = z * g.slice_size(), end = begin + g.slice_size();
    for (Index i = begin; i < end; ++i) {
      double sq = 0.0;
      for (int a = 0; a < 3; ++a) {
        const float before = u.data()(a, i);
        const float after = updated(before, f.data()(a, i), c.data()(a, i), tau, alpha);
        u.data()(a, i) = after;
        const double d = static_cast<double>(after) - static_cast<double>(before);
        sq += d * d;
        if (!std::isfinite(after)) ok = false;
        mx = std::max(mx, std::abs(static_cast<double>(after)));
      }
      acc += std::sqrt(sq);
    }
    max_abs[static_cast<std::size_t>(z)] = mx;
    finite[static_cast<std::size_t>(z)] = ok;
    return acc;
  });
  UpdateStats stats{total / static_cast<double>(g.voxel_count()), true, 0.0};
  for (std::size_t z = 0; z < max_abs.size(); ++z) {
    stats.finite = stats.finite && finite[z];
    stats.max_abs = std::max(stats.max_abs, max_abs[z]);
  }
  return stats;
}

OrganBoundaryModel level_model(const Grid& grid, std::span<const ScalarVolume> probabilities, double sigma_omega) {
  if (probabilities.empty()) return empty_boundary_model<float>(grid);
  std::vector<OrganBoundaryModel> models;
  models.reserve(probabilities.size());
  for (const auto& p : probabilities) models.push_back(build_boundary_model(p, sigma_omega));
  return combine_models<float>(models);
}

ScalarVolume clamp_unit(ScalarVolume v) {
  v.data() = v.data().max(0.0f).min(1.0f);
  return v;
}

}  // namespace

void RegistrationParams::validate() const {
  require(alpha >= 0.0 && std::isfinite(alpha), ErrorCode::InvalidArgument, "alpha must be non-negative");
  require(tau > 0.0 && std::isfinite(tau), ErrorCode::InvalidArgument, "tau must be positive");
  require(kappa > 0.0 && std::isfinite(kappa), ErrorCode::InvalidArgument, "kappa must be positive");
  require(tau * alpha <= 1.0 / 6.0, ErrorCode::InvalidArgument,
          "tau * alpha must not exceed 1/6 for the explicit diffusion step to be stable");
  require(levels >= 1, ErrorCode::InvalidArgument, "levels must be at least 1");
  require(static_cast<int>(max_iters.size()) == levels, ErrorCode::InvalidArgument,
          "max_iters needs one entry per level");
  for (int it : max_iters) require(it >= 0, ErrorCode::InvalidArgument, "iteration counts must be non-negative");
  require(stop_tol >= 0.0, ErrorCode::InvalidArgument, "stop_tol must be non-negative");
  require(sigma_omega > 0.0 && std::isfinite(sigma_omega), ErrorCode::InvalidArgument, "sigma_omega must be positive");
}

DisplacementField step(const DisplacementField& u, const DisplacementField& f, const DisplacementField& c,
                       double tau, double alpha) {
  require_same_grid(u.grid(), f.grid(), "step");
  require_same_grid(u.grid(), c.grid(), "step");
  DisplacementField out(u.grid());
  const Index n = u.size();
  parallel_for(0, u.grid().nz(), [&](Index z) {
    const Index begin = z * u.grid().slice_size(), end = std::min(n, begin + u.grid().slice_size());
    for (Index i = begin; i < end; ++i)
      for (int a = 0; a < 3; ++a)
        out.data()(a, i) = updated(u.data()(a, i), f.data()(a, i), c.data()(a, i), tau, alpha);
  });
  require(all_finite(out), ErrorCode::NumericFailure, "step produced a non-finite displacement");
  return out;
}

LevelResult solve_level(const MindDescriptorField& mind_fixed, const MindDescriptorField& mind_moving,
                        const OrganBoundaryModel& model, const DisplacementField& u0,
                        const RegistrationParams& params, int max_iters) {
  require_same_grid(mind_fixed.grid(), mind_moving.grid(), "solve_level");
  require_same_grid(mind_fixed.grid(), model.grid(), "solve_level");
  require_same_grid(mind_fixed.grid(), u0.grid(), "solve_level");
  require(all_finite(u0), ErrorCode::NumericFailure, "initial displacement is not finite");

  const auto start = Clock::now();
  LevelResult result{u0, {}};
  result.report.dims = u0.grid().dims;
  const DescriptorForce<float> force(mind_moving, params.kappa);
  DisplacementField f(u0.grid());
  // an infinite tolerance switches the stopping rule off
  const bool may_stop = std::isfinite(params.stop_tol);
  for (int k = 0; k < max_iters; ++k) {
    const double energy = force.evaluate(mind_fixed, result.field, f);
    const DisplacementField c = correction(result.field, model);
    const UpdateStats stats = apply_update(result.field, f, c, params.tau, params.alpha);
    result.report.energy.push_back(energy);
    result.report.iterations = k + 1;
    if (!stats.finite) {
      std::ostringstream msg;
      msg << "non-finite displacement at iteration " << k << " on a " << describe(u0.grid())
          << " level (max |u| component " << stats.max_abs << ")";
      fail(ErrorCode::NumericFailure, msg.str());
    }
    if (may_stop && stats.mean_magnitude < params.stop_tol) {
      result.report.converged = true;
      break;
    }
  }
  result.report.wall_ms = elapsed_ms(start);
  return result;
}

LevelResult register_level(const ScalarVolume& fixed, const ScalarVolume& moving, const OrganBoundaryModel& model,
                           const DisplacementField& u0, const RegistrationParams& params, int max_iters) {
  require_same_grid(fixed.grid(), moving.grid(), "register_level");
  return solve_level(mind(fixed), mind(moving), model, u0, params, max_iters);
}

DisplacementSummary summarize_displacement(const DisplacementField& field) {
  const Grid& g = field.grid();
  const Eigen::Vector3f spacing = g.spacing.cast<float>();
  DisplacementSummary s{0.0, 0.0, 0.0, 0.0};
  std::vector<double> max_vox(static_cast<std::size_t>(g.nz())), max_mm(static_cast<std::size_t>(g.nz()));
  std::vector<double> sum_mm(static_cast<std::size_t>(g.nz()));
  const double sum_vox = ordered_sum(g.nz(), [&](Index z) {
    double acc = 0.0, acc_mm = 0.0, mv = 0.0, mm = 0.0;
    const Index begin = z * g.slice_size(), end = begin + g.slice_size();
    for (Index i = begin; i < end; ++i) {
      const double v = field[i].cast<double>().norm();
      const double p = field[i].cwiseProduct(spacing).cast<double>().norm();
      acc += v;
      acc_mm += p;
      mv = std::max(mv, v);
      mm = std::max(mm, p);
    }
    sum_mm[static_cast<std::size_t>(z)] = acc_mm;
    max_vox[static_cast<std::size_t>(z)] = mv;
    max_mm[static_cast<std::size_t>(z)] = mm;
    return acc;
  });
  const double n = static_cast<double>(g.voxel_count());
  s.mean_voxels = sum_vox / n;
  double total_mm = 0.0;
  for (std::size_t z = 0; z < sum_mm.size(); ++z) {
    total_mm += sum_mm[z];
    s.max_voxels = std::max(s.max_voxels, max_vox[z]);
    s.max_mm = std::max(s.max_mm, max_mm[z]);
  }
  s.mean_mm = total_mm / n;
  return s;
}

RegistrationResult register_volumes(const ScalarVolume& fixed, const ScalarVolume& moving,
                                    std::span<const ScalarVolume> probabilities, const RegistrationParams& params) {
  params.validate();
  require_same_grid(fixed.grid(), moving.grid(), "register");
  for (const auto& p : probabilities) require_same_grid(fixed.grid(), p.grid(), "register (probability map)");
  const int min_dim = 2 * MindParams{}.reach() + 1;
  require((fixed.dims().array() >= min_dim).all(), ErrorCode::InvalidArgument,
          "register: volumes need at least " + std::to_string(min_dim) + " voxels per axis");

  const auto start = Clock::now();
  RegistrationResult result;
  RegistrationReport& report = result.report;

  int levels = params.levels;
  while (levels > 1) {
    Grid g = fixed.grid();
    for (int l = 1; l < levels; ++l) g = downsampled_grid(g);
    if ((g.dims.array() >= 8).all()) break;
    --levels;
  }
  if (levels < params.levels) {
    report.warnings.push_back("pyramid reduced from " + std::to_string(params.levels) + " to " +
                              std::to_string(levels) + " levels: coarser levels would be smaller than 8 voxels");
  }
  const std::vector<int> iters(params.max_iters.end() - levels, params.max_iters.end());

  // index 0 is the finest level
  auto t0 = Clock::now();
  std::vector<ScalarVolume> fixed_pyr{fixed}, moving_pyr{moving};
  std::vector<std::vector<ScalarVolume>> prob_pyr(1);
  for (const auto& p : probabilities) prob_pyr[0].push_back(clamp_unit(soften_if_binary(p)));
  for (int l = 1; l < levels; ++l) {
    fixed_pyr.push_back(downsample(fixed_pyr.back()));
    moving_pyr.push_back(downsample(moving_pyr.back()));
    std::vector<ScalarVolume> probs;
    for (const auto& p : prob_pyr.back()) probs.push_back(clamp_unit(downsample(p)));
    prob_pyr.push_back(std::move(probs));
  }
  report.pyramid_ms = elapsed_ms(t0);

  t0 = Clock::now();
  std::vector<MindDescriptorField> mind_fixed, mind_moving;
  for (int l = 0; l < levels; ++l) {
    MindParams mp;
    mp.summation = l == 0 ? PatchSummation::Box : PatchSummation::Direct;
    mind_fixed.push_back(mind(fixed_pyr[static_cast<std::size_t>(l)], mp));
    mind_moving.push_back(mind(moving_pyr[static_cast<std::size_t>(l)], mp));
  }
  report.descriptor_ms = elapsed_ms(t0);

  DisplacementField u;
  for (int l = levels - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    const Grid& grid = fixed_pyr[li].grid();
    const OrganBoundaryModel model = level_model(grid, prob_pyr[li], params.sigma_omega);
    const DisplacementField u0 = (l == levels - 1) ? DisplacementField(grid) : upsample_field(u, grid);
    LevelResult level = solve_level(mind_fixed[li], mind_moving[li], model, u0, params,
                                    iters[static_cast<std::size_t>(levels - 1 - l)]);
    u = std::move(level.field);
    report.levels.push_back(std::move(level.report));
  }

  const DisplacementSummary s = summarize_displacement(u);
  report.mean_disp_voxels = s.mean_voxels;
  report.max_disp_voxels = s.max_voxels;
  report.mean_disp_mm = s.mean_mm;
  report.max_disp_mm = s.max_mm;
  report.total_ms = elapsed_ms(start);
  result.field = std::move(u);
  return result;
}

nlohmann::json RegistrationReport::to_json() const {
  nlohmann::json j;
  j["levels"] = levels.size();
  j["iters"] = nlohmann::json::array();
  j["energy_trace"] = nlohmann::json::array();
  j["dims"] = nlohmann::json::array();
  j["converged"] = nlohmann::json::array();
  nlohmann::json level_ms = nlohmann::json::array();
  for (const auto& l : levels) {
    j["iters"].push_back(l.iterations);
    j["energy_trace"].push_back(l.energy);
    j["dims"].push_back({l.dims.x(), l.dims.y(), l.dims.z()});
    j["converged"].push_back(l.converged);
    level_ms.push_back(l.wall_ms);
  }
  j["mean_disp_mm"] = mean_disp_mm;
  j["max_disp_mm"] = max_disp_mm;
  j["mean_disp_voxels"] = mean_disp_voxels;
  j["max_disp_voxels"] = max_disp_voxels;
  j["wall_ms"] = {{"pyramid", pyramid_ms}, {"descriptors", descriptor_ms}, {"levels", level_ms}, {"total", total_ms}};
  j["warnings"] = warnings;
  return j;
}

}  // namespace mindreg
