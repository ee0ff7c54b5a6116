#pragma once

#include <Eigen/Core>

#include <cmath>

#include "mindreg/descriptor.hpp"
#include "mindreg/parallel.hpp"
#include "mindreg/sampling.hpp"
#include "mindreg/volume.hpp"

namespace mindreg {

/// Demons-style descriptor force. For every channel c
///
///   f_c(x) = r_c(x) * grad m_c(M, x) / (|grad m_c(M, x)|^2 + kappa^2),
///   r_c(x) = m_c(F, x - u(x)) - m_c(M, x),
///
/// and the force is the sum over channels. The moving-descriptor gradients
/// are static, so the normalized gradients are computed once at
/// construction.
template <typename Scalar>
class DescriptorForce {
 public:
  DescriptorForce(const DescriptorField<Scalar>& moving, double kappa)
      : moving_(moving), kappa_(kappa) {
    require(kappa > 0.0 && std::isfinite(kappa), ErrorCode::InvalidArgument, "force: kappa must be positive");
    const Grid& g = moving.grid();
    require((g.dims.array() >= 2).all(), ErrorCode::InvalidArgument,
            "force: descriptor grid needs at least 2 voxels per axis");
    const Index channels = moving.channels();
    weights_.resize(3 * channels, g.voxel_count());
    const Index stride[3] = {1, g.nx(), g.slice_size()};
    const Scalar k2 = static_cast<Scalar>(kappa * kappa);
    const auto& m = moving.data();
    parallel_for(0, g.nz(), [&](Index z) {
      for (Index y = 0; y < g.ny(); ++y)
        for (Index x = 0; x < g.nx(); ++x) {
          const Index i = g.index(x, y, z);
          const Index pos[3] = {x, y, z};
          for (Index c = 0; c < channels; ++c) {
            Vec3<Scalar> grad;
            for (int a = 0; a < 3; ++a) {
              if (pos[a] == 0)
                grad[a] = m(c, i + stride[a]) - m(c, i);
              else if (pos[a] == g.dims[a] - 1)
                grad[a] = m(c, i) - m(c, i - stride[a]);
              else
                grad[a] = (m(c, i + stride[a]) - m(c, i - stride[a])) / Scalar(2);
            }
            weights_.template block<3, 1>(3 * c, i) = grad / (grad.squaredNorm() + k2);
          }
        }
    });
  }

  double kappa() const { return kappa_; }
  const DescriptorField<Scalar>& moving() const { return moving_; }

  /// Writes the force for displacement u into `force` and returns the mean
  /// squared residual over voxels and channels.
  double evaluate(const DescriptorField<Scalar>& fixed, const VectorField<Scalar>& u,
                  VectorField<Scalar>& force) const {
    require_same_grid(fixed.grid(), moving_.grid(), "force");
    require_same_grid(u.grid(), moving_.grid(), "force");
    require(fixed.channels() == moving_.channels(), ErrorCode::GeometryMismatch, "force: channel count mismatch");
    if (force.grid() != u.grid()) force = VectorField<Scalar>(u.grid());

    const Grid& g = u.grid();
    const Index channels = moving_.channels();
    const auto& mf = fixed.data();
    const auto& mm = moving_.data();
    const double total = ordered_sum(g.nz(), [&](Index z) {
      double energy = 0.0;
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1> sampled(channels);
      for (Index y = 0; y < g.ny(); ++y)
        for (Index x = 0; x < g.nx(); ++x) {
          const Index i = g.index(x, y, z);
          const auto ui = u[i];
          const detail::TrilinearStencil<Scalar> st(g, x - static_cast<double>(ui.x()),
                                                    y - static_cast<double>(ui.y()),
                                                    z - static_cast<double>(ui.z()));
          sampled.setZero();
          for (int k = 0; k < 8; ++k) sampled += st.weight[k] * mf.col(st.index[k]);
          Vec3<Scalar> f = Vec3<Scalar>::Zero();
          for (Index c = 0; c < channels; ++c) {
            const Scalar r = sampled[c] - mm(c, i);
            energy += static_cast<double>(r) * static_cast<double>(r);
            f += r * weights_.template block<3, 1>(3 * c, i);
          }
          force[i] = f;
        }
      return energy;
    });
    return total / (static_cast<double>(g.voxel_count()) * static_cast<double>(channels));
  }

 private:
  DescriptorField<Scalar> moving_;
  double kappa_;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> weights_;  // 3*channels x voxels
};

template <typename Scalar>
VectorField<Scalar> force_field(const DescriptorField<Scalar>& mind_moving, const DescriptorField<Scalar>& mind_fixed,
                                const VectorField<Scalar>& u, double kappa) {
  require_same_grid(mind_moving.grid(), mind_fixed.grid(), "force_field");
  require(mind_moving.channels() == mind_fixed.channels(), ErrorCode::GeometryMismatch,
          "force_field: channel count mismatch");
  VectorField<Scalar> out(u.grid());
  DescriptorForce<Scalar>(mind_moving, kappa).evaluate(mind_fixed, u, out);
  return out;
}

}  // namespace mindreg
