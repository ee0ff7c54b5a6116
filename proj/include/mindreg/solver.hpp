#pragma once

#include "json.hpp"

#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mindreg/descriptor.hpp"
#include "mindreg/organ_map.hpp"
#include "mindreg/volume.hpp"

namespace mindreg {

struct RegistrationParams {
  double alpha = 1.0;    // regularization weight
  double tau = 0.125;    // explicit step size
  double kappa = 0.5;    // force stabilizer
  int levels = 3;
  std::vector<int> max_iters{100, 100, 50};  // coarse to fine
  double stop_tol = 1e-5;  // mean update magnitude, voxels; infinity disables
  double sigma_omega = 2.0;

  /// Throws InvalidArgument on inconsistent settings, including
  /// tau * alpha > 1/6 (explicit diffusion stability).
  void validate() const;
};

struct LevelReport {
  Eigen::Vector3i dims;
  int iterations = 0;
  bool converged = false;
  std::vector<double> energy;  // mind_ssd before each update
  double wall_ms = 0.0;
};

struct RegistrationReport {
  std::vector<LevelReport> levels;  // coarse to fine
  double mean_disp_voxels = 0.0;
  double max_disp_voxels = 0.0;
  double mean_disp_mm = 0.0;
  double max_disp_mm = 0.0;
  double pyramid_ms = 0.0;
  double descriptor_ms = 0.0;
  double total_ms = 0.0;
  std::vector<std::string> warnings;

  /// Keys: levels, iters, energy_trace, mean_disp_mm, max_disp_mm, wall_ms
  /// (plus dims, converged, mean/max in voxels and warnings).
  nlohmann::json to_json() const;
};

/// u + tau * (f + alpha * c), with c the smoothing (diffusion) term.
DisplacementField step(const DisplacementField& u, const DisplacementField& f, const DisplacementField& c,
                       double tau, double alpha);

struct LevelResult {
  DisplacementField field;
  LevelReport report;
};

/// Fixed-point iteration on precomputed descriptors: force, decomposition,
/// correction, update; stops after max_iters or when the mean update
/// magnitude drops below params.stop_tol.
LevelResult solve_level(const MindDescriptorField& mind_fixed, const MindDescriptorField& mind_moving,
                        const OrganBoundaryModel& model, const DisplacementField& u0,
                        const RegistrationParams& params, int max_iters);

/// Single-resolution registration; descriptors are computed here.
LevelResult register_level(const ScalarVolume& fixed, const ScalarVolume& moving, const OrganBoundaryModel& model,
                           const DisplacementField& u0, const RegistrationParams& params, int max_iters);

struct RegistrationResult {
  DisplacementField field;
  RegistrationReport report;
};

/// Coarse-to-fine registration. Probability maps live on the fixed grid;
/// an empty list means homogeneous regularization. Maps are downsampled with
/// the images and the boundary model is rebuilt on every level.
RegistrationResult register_volumes(const ScalarVolume& fixed, const ScalarVolume& moving,
                                    std::span<const ScalarVolume> probabilities, const RegistrationParams& params);

/// Mean and max displacement magnitude, in voxels and in mm.
struct DisplacementSummary {
  double mean_voxels, max_voxels, mean_mm, max_mm;
};
DisplacementSummary summarize_displacement(const DisplacementField& field);

}  // namespace mindreg
