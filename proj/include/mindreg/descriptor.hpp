#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "mindreg/parallel.hpp"
#include "mindreg/volume.hpp"

namespace mindreg {

using Offset = Eigen::Vector3i;

/// Full 3x3x3 patch.
inline std::vector<Offset> cube_offsets() {
  std::vector<Offset> out;
  for (int z = -1; z <= 1; ++z)
    for (int y = -1; y <= 1; ++y)
      for (int x = -1; x <= 1; ++x) out.emplace_back(x, y, z);
  return out;
}

/// +x, -x, +y, -y, +z, -z.
inline std::vector<Offset> six_neighborhood() {
  return {Offset(1, 0, 0), Offset(-1, 0, 0), Offset(0, 1, 0),
          Offset(0, -1, 0), Offset(0, 0, 1), Offset(0, 0, -1)};
}

enum class PatchSummation {
  Automatic,  // box accumulation for the full cube on large volumes
  Direct,
  Box,
};

struct MindParams {
  std::vector<Offset> patch_offsets = cube_offsets();
  std::vector<Offset> stencil_offsets = six_neighborhood();
  /// Absolute variance floor; when unset it is 1e-6 times the global mean of
  /// the six-neighborhood patch distances.
  double variance_floor = 0.0;
  PatchSummation summation = PatchSummation::Automatic;

  void validate() const {
    require(!patch_offsets.empty(), ErrorCode::InvalidArgument, "MIND patch must be non-empty");
    require(!stencil_offsets.empty(), ErrorCode::InvalidArgument, "MIND stencil must be non-empty");
    for (const auto& r : stencil_offsets)
      require(r != Offset::Zero(), ErrorCode::InvalidArgument, "MIND stencil may not contain the zero offset");
    require(variance_floor >= 0.0 && std::isfinite(variance_floor), ErrorCode::InvalidArgument,
            "MIND variance floor must be non-negative");
  }

  /// Patch radius plus stencil radius, in voxels (Chebyshev).
  int reach() const {
    int p = 0, s = 0;
    for (const auto& o : patch_offsets) p = std::max(p, o.cwiseAbs().maxCoeff());
    for (const auto& o : stencil_offsets) s = std::max(s, o.cwiseAbs().maxCoeff());
    return p + s;
  }
};

/// Per-voxel self-similarity vector, one channel per stencil offset. Channels
/// of a voxel are contiguous (column-major channels x voxels).
template <typename Scalar>
class DescriptorField {
 public:
  using Storage = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  DescriptorField() = default;
  DescriptorField(const Grid& grid, std::vector<Offset> stencil)
      : grid_(grid), stencil_(std::move(stencil)),
        data_(Storage::Zero(static_cast<Index>(stencil_.size()), grid.voxel_count())) {}

  const Grid& grid() const { return grid_; }
  const std::vector<Offset>& stencil() const { return stencil_; }
  Index channels() const { return data_.rows(); }

  Storage& data() { return data_; }
  const Storage& data() const { return data_; }

  auto operator[](Index voxel) { return data_.col(voxel); }
  auto operator[](Index voxel) const { return data_.col(voxel); }

  Volume<Scalar> channel(Index c) const { return Volume<Scalar>(grid_, data_.row(c).transpose().array()); }

 private:
  Grid grid_;
  std::vector<Offset> stencil_;
  Storage data_;
};

using MindDescriptorField = DescriptorField<float>;

/// Sum of squared differences between the clamp-extended patches centred at
/// x1 and x2.
template <typename Scalar>
double patch_distance(const Volume<Scalar>& vol, const Offset& x1, const Offset& x2,
                      std::span<const Offset> patch) {
  double acc = 0.0;
  for (const auto& p : patch) {
    const Offset a = x1 + p, b = x2 + p;
    const double d = static_cast<double>(vol.clamped(a.x(), a.y(), a.z())) -
                     static_cast<double>(vol.clamped(b.x(), b.y(), b.z()));
    acc += d * d;
  }
  return acc;
}

/// Mean patch distance to the six face neighbors, floored at epsilon.
template <typename Scalar>
double local_variance(const Volume<Scalar>& vol, const Offset& x, std::span<const Offset> patch, double epsilon) {
  double acc = 0.0;
  for (const auto& n : six_neighborhood()) acc += patch_distance(vol, x, Offset(x + n), patch);
  return std::max(acc / 6.0, epsilon);
}

namespace detail {

inline bool is_full_cube(std::span<const Offset> patch) {
  if (patch.size() != 27) return false;
  auto cube = cube_offsets();
  for (const auto& c : cube)
    if (std::find(patch.begin(), patch.end(), c) == patch.end()) return false;
  return true;
}

// D(x) = sum_p (I(x+p) - I(x+r+p))^2 for every voxel, by direct summation.
template <typename Scalar>
Eigen::ArrayXd patch_distance_direct(const Volume<Scalar>& vol, const Offset& r, std::span<const Offset> patch) {
  const Grid& g = vol.grid();
  Eigen::ArrayXd out(g.voxel_count());
  parallel_for(0, g.nz(), [&](Index z) {
    for (Index y = 0; y < g.ny(); ++y)
      for (Index x = 0; x < g.nx(); ++x) {
        const Offset c(static_cast<int>(x), static_cast<int>(y), static_cast<int>(z));
        out[g.index(x, y, z)] = patch_distance(vol, c, Offset(c + r), patch);
      }
  });
  return out;
}

// Same quantity for the 3x3x3 cube via separable box sums of the squared
// shifted difference, evaluated on a one-voxel padded lattice.
template <typename Scalar>
Eigen::ArrayXd patch_distance_box(const Volume<Scalar>& vol, const Offset& r) {
  const Grid& g = vol.grid();
  const Index px = g.nx() + 2, py = g.ny() + 2, pz = g.nz() + 2;
  auto pidx = [&](Index x, Index y, Index z) { return x + px * (y + py * z); };

  Eigen::ArrayXd sq(px * py * pz);
  parallel_for(0, pz, [&](Index z) {
    for (Index y = 0; y < py; ++y)
      for (Index x = 0; x < px; ++x) {
        const Index ax = x - 1, ay = y - 1, az = z - 1;
        const double d = static_cast<double>(vol.clamped(ax, ay, az)) -
                         static_cast<double>(vol.clamped(ax + r.x(), ay + r.y(), az + r.z()));
        sq[pidx(x, y, z)] = d * d;
      }
  });

  // x pass on the padded lattice (interior x only), then y, then z.
  Eigen::ArrayXd bx(px * py * pz), by(px * py * pz);
  parallel_for(0, pz, [&](Index z) {
    for (Index y = 0; y < py; ++y)
      for (Index x = 1; x < px - 1; ++x)
        bx[pidx(x, y, z)] = sq[pidx(x - 1, y, z)] + sq[pidx(x, y, z)] + sq[pidx(x + 1, y, z)];
  });
  parallel_for(0, pz, [&](Index z) {
    for (Index y = 1; y < py - 1; ++y)
      for (Index x = 1; x < px - 1; ++x)
        by[pidx(x, y, z)] = bx[pidx(x, y - 1, z)] + bx[pidx(x, y, z)] + bx[pidx(x, y + 1, z)];
  });
  Eigen::ArrayXd out(g.voxel_count());
  parallel_for(0, g.nz(), [&](Index z) {
    for (Index y = 0; y < g.ny(); ++y)
      for (Index x = 0; x < g.nx(); ++x)
        out[g.index(x, y, z)] = by[pidx(x + 1, y + 1, z)] + by[pidx(x + 1, y + 1, z + 1)] + by[pidx(x + 1, y + 1, z + 2)];
  });
  return out;
}

template <typename Scalar>
Eigen::ArrayXd patch_distance_map(const Volume<Scalar>& vol, const Offset& r, std::span<const Offset> patch,
                                  PatchSummation method) {
  const bool cube = is_full_cube(patch);
  if (method == PatchSummation::Automatic) method = (cube && vol.size() >= 32768) ? PatchSummation::Box : PatchSummation::Direct;
  if (method == PatchSummation::Box) {
    require(cube, ErrorCode::InvalidArgument, "box patch summation needs the full 3x3x3 patch");
    return patch_distance_box(vol, r);
  }
  return patch_distance_direct(vol, r, patch);
}

}  // namespace detail

/// Relative variance floor: 1e-6 times the mean six-neighborhood patch
/// distance, or 1e-12 if the volume is flat.
template <typename Scalar>
double default_variance_floor(const Volume<Scalar>& vol, std::span<const Offset> patch,
                              PatchSummation method = PatchSummation::Automatic) {
  double total = 0.0;
  for (const auto& n : six_neighborhood()) total += detail::patch_distance_map(vol, n, patch, method).sum();
  const double mean = total / (6.0 * static_cast<double>(vol.size()));
  return mean > 0.0 ? 1e-6 * mean : 1e-12;
}

/// Modality independent neighborhood descriptor. Each channel is
/// exp(-D_p(x, x+r) / V(x)), max-normalized per voxel so the largest
/// channel is exactly 1.
template <typename Scalar>
DescriptorField<Scalar> mind(const Volume<Scalar>& vol, const MindParams& params = {}) {
  params.validate();
  const Grid& g = vol.grid();
  const int min_dim = 2 * params.reach() + 1;
  require((g.dims.array() >= min_dim).all(), ErrorCode::InvalidArgument,
          "mind: volume needs at least " + std::to_string(min_dim) + " voxels per axis");

  const std::span<const Offset> patch(params.patch_offsets);
  const auto neighbors = six_neighborhood();
  const auto& stencil = params.stencil_offsets;

  std::vector<Eigen::ArrayXd> neighbor_dist;
  neighbor_dist.reserve(neighbors.size());
  for (const auto& n : neighbors) neighbor_dist.push_back(detail::patch_distance_map(vol, n, patch, params.summation));

  double epsilon = params.variance_floor;
  if (epsilon <= 0.0) {
    double total = 0.0;
    for (const auto& d : neighbor_dist) total += d.sum();
    const double mean = total / (6.0 * static_cast<double>(vol.size()));
    epsilon = mean > 0.0 ? 1e-6 * mean : 1e-12;
  }

  Eigen::ArrayXd variance = Eigen::ArrayXd::Zero(g.voxel_count());
  for (const auto& d : neighbor_dist) variance += d;
  variance = (variance / 6.0).max(epsilon);

  std::vector<Eigen::ArrayXd> stencil_dist;
  stencil_dist.reserve(stencil.size());
  for (const auto& r : stencil) {
    const auto it = std::find(neighbors.begin(), neighbors.end(), r);
    if (it != neighbors.end())
      stencil_dist.push_back(neighbor_dist[static_cast<std::size_t>(it - neighbors.begin())]);
    else
      stencil_dist.push_back(detail::patch_distance_map(vol, r, patch, params.summation));
  }
  neighbor_dist.clear();

  DescriptorField<Scalar> out(g, stencil);
  const Index channels = out.channels();
  const Scalar tiny = std::numeric_limits<Scalar>::min();
  parallel_for(0, g.nz(), [&](Index z) {
    const Index begin = z * g.slice_size(), end = begin + g.slice_size();
    for (Index i = begin; i < end; ++i) {
      double dmin = stencil_dist[0][i];
      for (Index c = 1; c < channels; ++c) dmin = std::min(dmin, stencil_dist[static_cast<std::size_t>(c)][i]);
      // exp(-D/V) / max_c exp(-D_c/V) == exp(-(D - D_min)/V)
      for (Index c = 0; c < channels; ++c) {
        const double e = std::exp(-(stencil_dist[static_cast<std::size_t>(c)][i] - dmin) / variance[i]);
        out.data()(c, i) = std::max(static_cast<Scalar>(e), tiny);
      }
    }
  });
  return out;
}

/// Mean squared descriptor difference over voxels and channels.
template <typename Scalar>
double mind_ssd(const DescriptorField<Scalar>& a, const DescriptorField<Scalar>& b) {
  require_same_grid(a.grid(), b.grid(), "mind_ssd");
  require(a.channels() == b.channels(), ErrorCode::GeometryMismatch, "mind_ssd: channel count mismatch");
  const Grid& g = a.grid();
  const double total = ordered_sum(g.nz(), [&](Index z) {
    double acc = 0.0;
    const Index begin = z * g.slice_size(), end = begin + g.slice_size();
    for (Index i = begin; i < end; ++i)
      for (Index c = 0; c < a.channels(); ++c) {
        const double d = static_cast<double>(a.data()(c, i)) - static_cast<double>(b.data()(c, i));
        acc += d * d;
      }
    return acc;
  });
  return total / (static_cast<double>(g.voxel_count()) * static_cast<double>(a.channels()));
}

}  // namespace mindreg
