#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <vector>

#include "mindreg/volume.hpp"

namespace mindreg {

struct SurfaceDistanceStats {
  double mean = 0.0;  // mm
  double std = 0.0;   // mm
  double max = 0.0;   // Hausdorff, mm
  std::size_t n_surface_voxels = 0;
};

enum class SurfaceDistanceMode {
  Symmetric,  // a->b and b->a distances pooled
  Directed,   // a->b only
};

BinaryMask threshold(const ScalarVolume& vol, float level = 0.5f);
ScalarVolume to_volume(const BinaryMask& mask);

/// Backward-warps a mask with trilinear interpolation and re-thresholds at
/// 0.5.
BinaryMask propagate_mask(const BinaryMask& mask, const DisplacementField& field);

/// Dice coefficient; two empty masks score 1.
double dsc(const BinaryMask& a, const BinaryMask& b);

/// Foreground voxels with at least one 6-neighbor outside the mask (the
/// space beyond the grid counts as outside).
std::vector<Eigen::Vector3i> surface_voxels(const BinaryMask& mask);

/// Nearest-surface-voxel distances in mm. Exact: squared Euclidean distance
/// transform of the target surface set with the given voxel spacing.
SurfaceDistanceStats surface_distance(const BinaryMask& a, const BinaryMask& b, const Eigen::Vector3d& spacing,
                                      SurfaceDistanceMode mode = SurfaceDistanceMode::Symmetric);

/// Mean local SSIM over a 7^3 uniform window (shrunk at the borders), with
/// C1 = (0.01 L)^2, C2 = (0.03 L)^2 and L the dynamic range of a.
double ssim(const ScalarVolume& a, const ScalarVolume& b);

/// Global Pearson correlation; zero-variance inputs are rejected.
double ncc(const ScalarVolume& a, const ScalarVolume& b);

}  // namespace mindreg
