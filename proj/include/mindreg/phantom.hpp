#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <utility>

#include "json.hpp"
#include "mindreg/volume.hpp"

namespace mindreg {

/// Synthetic registration case with an analytic ground truth.
/// warp(moving, gt_field) reproduces fixed (up to the contrast change inside
/// the organ); `mask` and `moving_mask` are the same target structure in the
/// fixed and moving frames, `organ` is the organ region of the fixed frame.
struct PhantomCase {
  ScalarVolume fixed;
  ScalarVolume moving;
  ScalarVolume probability;
  DisplacementField gt_field;
  BinaryMask mask;
  BinaryMask moving_mask;
  BinaryMask organ;
  nlohmann::json parameters;
};

/// Two half-spaces separated by the plane z = nz/2. The upper half (the
/// organ) slides by `shift` within the plane, the lower half is static.
struct SlabPhantomParams {
  Eigen::Vector3i dims{64, 64, 64};
  Eigen::Vector3d shift{3.0, 0.0, 0.0};
  double contrast_delta = 0.0;
  std::uint64_t seed = 1;
};

/// Smooth Gaussian-profile displacement centred in the volume;
/// gt(x) = amplitude * exp(-|x - c|^2 / (2 sigma^2)) * direction.
struct BumpPhantomParams {
  Eigen::Vector3i dims{64, 64, 64};
  double amplitude = 4.0;
  double sigma = 10.0;
  Eigen::Vector3d direction{1.0, 0.0, 0.0};
  double contrast_delta = 0.0;
  std::uint64_t seed = 1;
};

PhantomCase sliding_slab_phantom(const SlabPhantomParams& params);
PhantomCase gaussian_bump_phantom(const BumpPhantomParams& params);

/// Mean and max of |u - gt| (scaled by the voxel spacing, mm) over the roi.
std::pair<double, double> endpoint_error(const DisplacementField& u, const DisplacementField& gt,
                                         const BinaryMask& roi);

}  // namespace mindreg
