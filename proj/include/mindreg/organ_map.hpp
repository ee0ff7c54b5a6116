#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>

#include "mindreg/parallel.hpp"
#include "mindreg/sampling.hpp"
#include "mindreg/volume.hpp"

namespace mindreg {

/// Boundary description derived from one or more organ probability maps.
///
/// `side` labels which region each voxel belongs to (0 = background, k = k-th
/// organ, 1-based); the side-respecting gradient never differences across a
/// label change. `band` marks the voxels with omega > 0.01 and a defined
/// normal; normals are unit length there and exactly zero elsewhere.
template <typename Scalar>
struct BoundaryModel {
  Volume<Scalar> probability;
  Volume<Scalar> omega;
  VectorField<Scalar> normals;
  Volume<std::uint8_t> band;
  Volume<std::uint8_t> side;

  const Grid& grid() const { return omega.grid(); }
};

using OrganBoundaryModel = BoundaryModel<float>;

inline constexpr double kBandThreshold = 0.01;
inline constexpr double kNormalGradientFloor = 1e-4;

/// Model with no organ: omega == 0, no normals, a single side. Regularization
/// then reduces to homogeneous diffusion.
template <typename Scalar>
BoundaryModel<Scalar> empty_boundary_model(const Grid& grid) {
  return {Volume<Scalar>(grid), Volume<Scalar>(grid), VectorField<Scalar>(grid),
          Volume<std::uint8_t>(grid), Volume<std::uint8_t>(grid)};
}

/// Binary masks (values only 0 and 1) are smoothed with a sigma = 1 voxel
/// Gaussian into soft maps; soft maps pass through unchanged.
template <typename Scalar>
Volume<Scalar> soften_if_binary(const Volume<Scalar>& probability) {
  const auto& d = probability.data();
  const bool binary = ((d == Scalar(0)) || (d == Scalar(1))).all();
  return binary ? gaussian_smooth(probability, 1.0) : probability;
}

template <typename Scalar>
BoundaryModel<Scalar> build_boundary_model(const Volume<Scalar>& probability, double sigma_omega) {
  require(sigma_omega > 0.0 && std::isfinite(sigma_omega), ErrorCode::InvalidArgument,
          "build_boundary_model: sigma_omega must be positive");
  const auto& p = probability.data();
  require(p.allFinite() && (p >= Scalar(0)).all() && (p <= Scalar(1)).all(), ErrorCode::InvalidArgument,
          "build_boundary_model: probability values must lie in [0, 1]");

  const Grid& g = probability.grid();
  const VectorField<Scalar> grad = gradient(gaussian_smooth(probability, 1.0));
  BoundaryModel<Scalar> model{probability, Volume<Scalar>(g), VectorField<Scalar>(g), Volume<std::uint8_t>(g),
                              Volume<std::uint8_t>(g)};
  const double dmax = 5.0 * sigma_omega;
  const double inv2s2 = 1.0 / (2.0 * sigma_omega * sigma_omega);

  parallel_for(0, g.nz(), [&](Index z) {
    const Index begin = z * g.slice_size(), end = begin + g.slice_size();
    for (Index i = begin; i < end; ++i) {
      const Vec3<double> gi = grad[i].template cast<double>();
      const double mag = gi.norm();
      // first-order signed distance to the 0.5 level set
      const double d = std::clamp((static_cast<double>(p[i]) - 0.5) / (mag + 1e-6), -dmax, dmax);
      const double w = std::exp(-d * d * inv2s2);
      model.omega[i] = static_cast<Scalar>(w);
      model.side[i] = p[i] >= Scalar(0.5) ? 1 : 0;
      if (mag > kNormalGradientFloor && w > kBandThreshold) {
        model.normals[i] = (gi / mag).template cast<Scalar>();
        model.band[i] = 1;
      }
    }
  });
  return model;
}

/// Per-voxel union of several organ models: omega is the maximum, normals
/// come from the model with the largest omega (first wins on ties), and the
/// side label is the first organ containing the voxel.
template <typename Scalar>
BoundaryModel<Scalar> combine_models(std::span<const BoundaryModel<Scalar>> models) {
  require(!models.empty(), ErrorCode::InvalidArgument, "combine_models: no models given");
  if (models.size() == 1) return models.front();
  const Grid& g = models.front().grid();
  for (const auto& m : models) require_same_grid(g, m.grid(), "combine_models");
  require(models.size() < 255, ErrorCode::InvalidArgument, "combine_models: too many organs");

  BoundaryModel<Scalar> out = empty_boundary_model<Scalar>(g);
  parallel_for(0, g.nz(), [&](Index z) {
    const Index begin = z * g.slice_size(), end = begin + g.slice_size();
    for (Index i = begin; i < end; ++i) {
      std::size_t best = 0;
      Scalar pmax(0);
      std::uint8_t label = 0;
      for (std::size_t k = 0; k < models.size(); ++k) {
        const auto& m = models[k];
        if (m.omega[i] > models[best].omega[i]) best = k;
        pmax = std::max(pmax, m.probability[i]);
        if (label == 0 && m.side[i]) label = static_cast<std::uint8_t>(k + 1);
      }
      out.probability[i] = pmax;
      out.omega[i] = models[best].omega[i];
      out.normals[i] = models[best].normals[i];
      out.band[i] = models[best].band[i];
      out.side[i] = label;
    }
  });
  return out;
}

/// Splits u into its component along the boundary normal and the tangential
/// remainder. Where the normal is zero, u is entirely tangential.
template <typename Scalar>
std::pair<VectorField<Scalar>, VectorField<Scalar>> decompose(const VectorField<Scalar>& u,
                                                                const BoundaryModel<Scalar>& model) {
  require_same_grid(u.grid(), model.grid(), "decompose");
  const Grid& g = u.grid();
  VectorField<Scalar> perp(g), par(g);
  parallel_for(0, g.nz(), [&](Index z) {
    const Index begin = z * g.slice_size(), end = begin + g.slice_size();
    for (Index i = begin; i < end; ++i) {
      const auto n = model.normals[i];
      const Vec3<Scalar> ui = u[i];
      const Vec3<Scalar> up = ui.dot(n) * n;
      perp[i] = up;
      par[i] = ui - up;
    }
  });
  return {std::move(perp), std::move(par)};
}

}  // namespace mindreg
