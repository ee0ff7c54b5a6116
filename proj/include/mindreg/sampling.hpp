#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mindreg/parallel.hpp"
#include "mindreg/volume.hpp"

namespace mindreg {

namespace detail {

struct AxisLerp {
  Index lo;
  Index hi;
  double t;
};

// Clamp-to-edge linear interpolation support along one axis.
inline AxisLerp axis_lerp(double p, Index n) {
  if (n == 1) return {0, 0, 0.0};
  const double c = std::clamp(p, 0.0, static_cast<double>(n - 1));
  const Index lo = std::min<Index>(static_cast<Index>(std::floor(c)), n - 2);
  return {lo, lo + 1, c - static_cast<double>(lo)};
}

/// The eight lattice neighbors of a continuous voxel position and their
/// trilinear weights.
template <typename Scalar>
struct TrilinearStencil {
  Index index[8];
  Scalar weight[8];

  TrilinearStencil(const Grid& grid, double px, double py, double pz) {
    const AxisLerp ax = axis_lerp(px, grid.nx());
    const AxisLerp ay = axis_lerp(py, grid.ny());
    const AxisLerp az = axis_lerp(pz, grid.nz());
    const Scalar tx = static_cast<Scalar>(ax.t), ty = static_cast<Scalar>(ay.t),
                 tz = static_cast<Scalar>(az.t);
    const Scalar one(1);
    int k = 0;
    for (int dz = 0; dz < 2; ++dz) {
      const Index z = dz ? az.hi : az.lo;
      const Scalar wz = dz ? tz : one - tz;
      for (int dy = 0; dy < 2; ++dy) {
        const Index y = dy ? ay.hi : ay.lo;
        const Scalar wy = dy ? ty : one - ty;
        for (int dx = 0; dx < 2; ++dx) {
          const Index x = dx ? ax.hi : ax.lo;
          index[k] = grid.index(x, y, z);
          weight[k] = (dx ? tx : one - tx) * wy * wz;
          ++k;
        }
      }
    }
  }
};

// Nested lerps a + t (b - a): exact on constant data and at lattice points.
template <typename Fetch>
double nested_lerp(const Grid& grid, double px, double py, double pz, Fetch&& fetch) {
  const AxisLerp ax = axis_lerp(px, grid.nx());
  const AxisLerp ay = axis_lerp(py, grid.ny());
  const AxisLerp az = axis_lerp(pz, grid.nz());
  auto along_x = [&](Index y, Index z) {
    const double a = fetch(grid.index(ax.lo, y, z)), b = fetch(grid.index(ax.hi, y, z));
    return a + ax.t * (b - a);
  };
  auto along_y = [&](Index z) {
    const double a = along_x(ay.lo, z), b = along_x(ay.hi, z);
    return a + ay.t * (b - a);
  };
  const double a = along_y(az.lo), b = along_y(az.hi);
  return a + az.t * (b - a);
}

}  // namespace detail

/// Trilinear interpolation at a continuous voxel coordinate. Coordinates
/// outside [0, dim-1] are clamped to the boundary first.
template <typename Scalar>
Scalar trilinear_sample(const Volume<Scalar>& vol, const Eigen::Vector3d& point) {
  return static_cast<Scalar>(detail::nested_lerp(vol.grid(), point.x(), point.y(), point.z(),
                                                 [&](Index i) { return static_cast<double>(vol[i]); }));
}

template <typename Scalar>
Vec3<Scalar> trilinear_sample(const VectorField<Scalar>& field, const Eigen::Vector3d& point) {
  const detail::TrilinearStencil<Scalar> st(field.grid(), point.x(), point.y(), point.z());
  Vec3<Scalar> acc = Vec3<Scalar>::Zero();
  for (int k = 0; k < 8; ++k) acc += st.weight[k] * field.data().col(st.index[k]);
  return acc;
}

/// Backward warp: out(x) = vol(x + u(x)).
template <typename Scalar>
Volume<Scalar> warp(const Volume<Scalar>& vol, const VectorField<Scalar>& field) {
  require_same_grid(vol.grid(), field.grid(), "warp");
  const Grid& g = vol.grid();
  Volume<Scalar> out(g);
  parallel_for(0, g.nz(), [&](Index z) {
    for (Index y = 0; y < g.ny(); ++y)
      for (Index x = 0; x < g.nx(); ++x) {
        const Index i = g.index(x, y, z);
        const auto u = field[i];
        out[i] = static_cast<Scalar>(detail::nested_lerp(
            g, x + static_cast<double>(u.x()), y + static_cast<double>(u.y()), z + static_cast<double>(u.z()),
            [&](Index j) { return static_cast<double>(vol[j]); }));
      }
  });
  return out;
}

/// Per-voxel spatial gradient in voxel units: central differences inside,
/// one-sided differences on the faces.
template <typename Scalar>
VectorField<Scalar> gradient(const Volume<Scalar>& vol) {
  const Grid& g = vol.grid();
  require((g.dims.array() >= 2).all(), ErrorCode::InvalidArgument,
          "gradient requires at least 2 voxels along every axis");
  VectorField<Scalar> out(g);
  const Index stride[3] = {1, g.nx(), g.slice_size()};
  parallel_for(0, g.nz(), [&](Index z) {
    for (Index y = 0; y < g.ny(); ++y)
      for (Index x = 0; x < g.nx(); ++x) {
        const Index i = g.index(x, y, z);
        const Index pos[3] = {x, y, z};
        for (int a = 0; a < 3; ++a) {
          const Index n = g.dims[a];
          const Index p = pos[a];
          Scalar d;
          if (p == 0)
            d = vol[i + stride[a]] - vol[i];
          else if (p == n - 1)
            d = vol[i] - vol[i - stride[a]];
          else
            d = (vol[i + stride[a]] - vol[i - stride[a]]) / Scalar(2);
          out.data()(a, i) = d;
        }
      }
  });
  return out;
}

namespace detail {

inline std::vector<double> gaussian_taps(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  for (int k = -radius; k <= radius; ++k)
    taps[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * k * k / (sigma * sigma));
  return taps;
}

// One separable pass along `axis`; taps falling outside the grid are dropped
// and the remaining weights renormalized.
template <typename Scalar>
Volume<Scalar> smooth_axis(const Volume<Scalar>& in, int axis, const std::vector<double>& taps) {
  const Grid& g = in.grid();
  const Index radius = static_cast<Index>(taps.size() / 2);
  const Index n = g.dims[axis];
  const Index stride = axis == 0 ? 1 : (axis == 1 ? g.nx() : g.slice_size());
  Volume<Scalar> out(g);
  parallel_for(0, g.nz(), [&](Index z) {
    for (Index y = 0; y < g.ny(); ++y)
      for (Index x = 0; x < g.nx(); ++x) {
        const Index i = g.index(x, y, z);
        const Index p = axis == 0 ? x : (axis == 1 ? y : z);
        const Index lo = std::max<Index>(-radius, -p);
        const Index hi = std::min<Index>(radius, n - 1 - p);
        double acc = 0.0, wsum = 0.0;
        for (Index k = lo; k <= hi; ++k) {
          const double w = taps[static_cast<std::size_t>(k + radius)];
          acc += w * static_cast<double>(in[i + k * stride]);
          wsum += w;
        }
        out[i] = static_cast<Scalar>(acc / wsum);
      }
  });
  return out;
}

}  // namespace detail

/// Separable Gaussian smoothing, truncated at 3 sigma and renormalized at
/// the borders.
template <typename Scalar>
Volume<Scalar> gaussian_smooth(const Volume<Scalar>& vol, double sigma) {
  require(sigma > 0.0 && std::isfinite(sigma), ErrorCode::InvalidArgument,
          "gaussian_smooth: sigma must be positive");
  const auto taps = detail::gaussian_taps(sigma);
  Volume<Scalar> out = vol;
  for (int axis = 0; axis < 3; ++axis)
    if (vol.grid().dims[axis] > 1) out = detail::smooth_axis(out, axis, taps);
  return out;
}

inline Grid downsampled_grid(const Grid& g) {
  const Eigen::Vector3i dims = (g.dims.array() + 1) / 2;
  return Grid(dims, g.spacing * 2.0, g.origin);
}

/// Factor-2 pyramid reduction: Gaussian pre-smoothing (sigma 1 voxel), then
/// every second voxel.
template <typename Scalar>
Volume<Scalar> downsample(const Volume<Scalar>& vol) {
  const Grid& g = vol.grid();
  require((g.dims.array() >= 4).all(), ErrorCode::InvalidArgument,
          "downsample requires at least 4 voxels along every axis");
  const Volume<Scalar> smooth = gaussian_smooth(vol, 1.0);
  const Grid coarse = downsampled_grid(g);
  Volume<Scalar> out(coarse);
  parallel_for(0, coarse.nz(), [&](Index z) {
    for (Index y = 0; y < coarse.ny(); ++y)
      for (Index x = 0; x < coarse.nx(); ++x)
        out(x, y, z) = smooth(2 * x, 2 * y, 2 * z);
  });
  return out;
}

/// Prolongs a coarse displacement field onto the next finer pyramid level.
/// Fine voxel i sits at coarse coordinate i/2; magnitudes are doubled because
/// the voxel unit halves.
template <typename Scalar>
VectorField<Scalar> upsample_field(const VectorField<Scalar>& field, const Grid& target) {
  const Grid& g = field.grid();
  for (int a = 0; a < 3; ++a) {
    const Index n = g.dims[a], d = target.dims[a];
    require(d >= 2 * n - 1 && d <= 2 * n + 1, ErrorCode::GeometryMismatch,
            "upsample_field: target dims must be about twice the field dims");
  }
  VectorField<Scalar> out(target);
  parallel_for(0, target.nz(), [&](Index z) {
    for (Index y = 0; y < target.ny(); ++y)
      for (Index x = 0; x < target.nx(); ++x) {
        const Eigen::Vector3d p(0.5 * x, 0.5 * y, 0.5 * z);
        out(x, y, z) = Scalar(2) * trilinear_sample(field, p);
      }
  });
  return out;
}

template <typename Scalar>
VectorField<Scalar> upsample_field(const VectorField<Scalar>& field, const Eigen::Vector3i& target_dims) {
  return upsample_field(field, Grid(target_dims, field.grid().spacing / 2.0, field.grid().origin));
}

}  // namespace mindreg
