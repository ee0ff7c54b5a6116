#pragma once

#include <Eigen/Core>

#include "mindreg/organ_map.hpp"
#include "mindreg/parallel.hpp"
#include "mindreg/volume.hpp"

namespace mindreg {

enum class Side { Inside, Outside };

/// Gradient that never differences across the organ boundary. Voxels on the
/// requested side get central differences over same-side neighbors, a
/// one-sided difference when one neighbor lies across the boundary (or off
/// the grid), and zero when neither is usable. Voxels on the other side are
/// zero.
template <typename Scalar>
VectorField<Scalar> masked_gradient(const Volume<Scalar>& s, const BoundaryModel<Scalar>& model, Side side) {
  require_same_grid(s.grid(), model.grid(), "masked_gradient");
  const Grid& g = s.grid();
  const Index stride[3] = {1, g.nx(), g.slice_size()};
  VectorField<Scalar> out(g);
  parallel_for(0, g.nz(), [&](Index z) {
    for (Index y = 0; y < g.ny(); ++y)
      for (Index x = 0; x < g.nx(); ++x) {
        const Index i = g.index(x, y, z);
        const auto label = model.side[i];
        if ((side == Side::Inside) != (label != 0)) continue;
        const Index pos[3] = {x, y, z};
        for (int a = 0; a < 3; ++a) {
          const bool lo = pos[a] > 0 && model.side[i - stride[a]] == label;
          const bool hi = pos[a] < g.dims[a] - 1 && model.side[i + stride[a]] == label;
          Scalar d(0);
          if (lo && hi)
            d = (s[i + stride[a]] - s[i - stride[a]]) / Scalar(2);
          else if (hi)
            d = s[i + stride[a]] - s[i];
          else if (lo)
            d = s[i] - s[i - stride[a]];
          out.data()(a, i) = d;
        }
      }
  });
  return out;
}

/// Direction-dependent diffusion term
///
///   c(u) = div(w grad u_perp) + div((1 - w) grad u) + divbar(w gradbar u_par)
///
/// on the 7-point stencil with face weights w_{i+1/2} = (w_i + w_{i+1}) / 2
/// and zero flux through the volume faces. The barred operators drop every
/// face whose two voxels carry different side labels, so the tangential
/// component is not smoothed across an organ boundary. The split into u_perp
/// and u_par is taken from the current u.
template <typename Scalar>
VectorField<Scalar> correction(const VectorField<Scalar>& u, const BoundaryModel<Scalar>& model) {
  require_same_grid(u.grid(), model.grid(), "correction");
  const auto [perp, par] = decompose(u, model);
  const Grid& g = u.grid();
  const Index stride[3] = {1, g.nx(), g.slice_size()};
  VectorField<Scalar> out(g);
  parallel_for(0, g.nz(), [&](Index z) {
    for (Index y = 0; y < g.ny(); ++y)
      for (Index x = 0; x < g.nx(); ++x) {
        const Index i = g.index(x, y, z);
        const Index pos[3] = {x, y, z};
        const Vec3<Scalar> ui = u[i], pi = perp[i], ti = par[i];
        const Scalar wi = model.omega[i];
        const auto label = model.side[i];
        Vec3<Scalar> acc = Vec3<Scalar>::Zero();
        for (int a = 0; a < 3; ++a) {
          for (int dir = -1; dir <= 1; dir += 2) {
            const Index p = pos[a] + dir;
            if (p < 0 || p >= g.dims[a]) continue;
            const Index j = i + dir * stride[a];
            const Scalar wf = (wi + model.omega[j]) / Scalar(2);
            acc += wf * (perp[j] - pi) + (Scalar(1) - wf) * (u[j] - ui);
            if (model.side[j] == label) acc += wf * (par[j] - ti);
          }
        }
        out[i] = acc;
      }
  });
  return out;
}

/// Discrete Dirichlet energy: sum over all grid faces of |u_j - u_i|^2.
template <typename Scalar>
double dirichlet_energy(const VectorField<Scalar>& u) {
  const Grid& g = u.grid();
  const Index stride[3] = {1, g.nx(), g.slice_size()};
  return ordered_sum(g.nz(), [&](Index z) {
    double acc = 0.0;
    for (Index y = 0; y < g.ny(); ++y)
      for (Index x = 0; x < g.nx(); ++x) {
        const Index i = g.index(x, y, z);
        const Index pos[3] = {x, y, z};
        for (int a = 0; a < 3; ++a)
          if (pos[a] + 1 < g.dims[a])
            acc += (u[i + stride[a]] - u[i]).template cast<double>().squaredNorm();
      }
    return acc;
  });
}

}  // namespace mindreg
