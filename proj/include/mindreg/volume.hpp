#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <utility>

#include "mindreg/error.hpp"

namespace mindreg {

using Index = Eigen::Index;

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

/// Voxel lattice geometry shared by scalar volumes, vector fields and
/// descriptor fields. Linear layout is x-fastest.
struct Grid {
  Eigen::Vector3i dims{1, 1, 1};
  Eigen::Vector3d spacing{1.0, 1.0, 1.0};
  Eigen::Vector3d origin{0.0, 0.0, 0.0};

  Grid() = default;
  Grid(Eigen::Vector3i d, Eigen::Vector3d s = Eigen::Vector3d::Ones(),
       Eigen::Vector3d o = Eigen::Vector3d::Zero())
      : dims(std::move(d)), spacing(std::move(s)), origin(std::move(o)) {
    validate();
  }

  void validate() const {
    require((dims.array() > 0).all(), ErrorCode::InvalidArgument, "grid dimensions must be positive");
    require((spacing.array() > 0.0).all() && spacing.allFinite(), ErrorCode::InvalidArgument,
            "grid spacing must be positive and finite");
    require(origin.allFinite(), ErrorCode::InvalidArgument, "grid origin must be finite");
  }

  Index nx() const { return dims.x(); }
  Index ny() const { return dims.y(); }
  Index nz() const { return dims.z(); }
  Index voxel_count() const { return nx() * ny() * nz(); }
  Index slice_size() const { return nx() * ny(); }

  Index index(Index x, Index y, Index z) const { return x + nx() * (y + ny() * z); }

  bool contains(Index x, Index y, Index z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < nx() && y < ny() && z < nz();
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.dims == b.dims && a.spacing == b.spacing && a.origin == b.origin;
  }
  friend bool operator!=(const Grid& a, const Grid& b) { return !(a == b); }
};

std::string describe(const Grid& grid);

inline void require_same_grid(const Grid& a, const Grid& b, const char* context) {
  if (a != b)
    fail(ErrorCode::GeometryMismatch,
         std::string(context) + ": grid mismatch (" + describe(a) + " vs " + describe(b) + ")");
}

inline Index clamp_index(Index i, Index n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

/// Dense scalar grid. Value type; copies are deep.
template <typename Scalar>
class Volume {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Volume() = default;
  explicit Volume(const Grid& grid, Scalar fill = Scalar(0))
      : grid_(grid), data_(Storage::Constant(grid.voxel_count(), fill)) {
    grid_.validate();
  }
  Volume(const Grid& grid, Storage data) : grid_(grid), data_(std::move(data)) {
    grid_.validate();
    require(data_.size() == grid_.voxel_count(), ErrorCode::InvalidArgument,
            "volume data length does not match grid");
  }

  const Grid& grid() const { return grid_; }
  const Eigen::Vector3i& dims() const { return grid_.dims; }
  Index size() const { return data_.size(); }

  Storage& data() { return data_; }
  const Storage& data() const { return data_; }

  Scalar& operator[](Index i) { return data_[i]; }
  const Scalar& operator[](Index i) const { return data_[i]; }

  Scalar& operator()(Index x, Index y, Index z) { return data_[grid_.index(x, y, z)]; }
  const Scalar& operator()(Index x, Index y, Index z) const { return data_[grid_.index(x, y, z)]; }

  /// Clamp-to-edge access for arbitrary integer coordinates.
  Scalar clamped(Index x, Index y, Index z) const {
    return data_[grid_.index(clamp_index(x, grid_.nx()), clamp_index(y, grid_.ny()),
                             clamp_index(z, grid_.nz()))];
  }

  void set_grid_metadata(const Eigen::Vector3d& spacing, const Eigen::Vector3d& origin) {
    grid_ = Grid(grid_.dims, spacing, origin);
  }

 private:
  Grid grid_;
  Storage data_;
};

/// Per-voxel 3-vector field; one column per voxel, components interleaved
/// x,y,z in memory. Displacements are in voxel units of the field's grid.
template <typename Scalar>
class VectorField {
 public:
  using Storage = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;

  VectorField() = default;
  explicit VectorField(const Grid& grid)
      : grid_(grid), data_(Storage::Zero(3, grid.voxel_count())) {
    grid_.validate();
  }
  VectorField(const Grid& grid, const Vec3<Scalar>& fill) : VectorField(grid) {
    data_.colwise() = fill;
  }
  VectorField(const Grid& grid, Storage data) : grid_(grid), data_(std::move(data)) {
    grid_.validate();
    require(data_.cols() == grid_.voxel_count(), ErrorCode::InvalidArgument,
            "vector field data length does not match grid");
  }

  const Grid& grid() const { return grid_; }
  const Eigen::Vector3i& dims() const { return grid_.dims; }
  Index size() const { return data_.cols(); }

  Storage& data() { return data_; }
  const Storage& data() const { return data_; }

  auto operator[](Index i) { return data_.col(i); }
  auto operator[](Index i) const { return data_.col(i); }

  auto operator()(Index x, Index y, Index z) { return data_.col(grid_.index(x, y, z)); }
  auto operator()(Index x, Index y, Index z) const { return data_.col(grid_.index(x, y, z)); }

  /// Single component as a scalar volume (copy).
  Volume<Scalar> component(int c) const {
    return Volume<Scalar>(grid_, data_.row(c).transpose().array());
  }

 private:
  Grid grid_;
  Storage data_;
};

using ScalarVolume = Volume<float>;
using DisplacementField = VectorField<float>;
using BinaryMask = Volume<std::uint8_t>;

template <typename Scalar>
bool all_finite(const Volume<Scalar>& v) {
  return v.data().allFinite();
}

template <typename Scalar>
bool all_finite(const VectorField<Scalar>& f) {
  return f.data().allFinite();
}

}  // namespace mindreg
