#include "mindreg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mindreg/parallel.hpp"
#include "mindreg/sampling.hpp"

namespace mindreg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D lower envelope of parabolas w2 (q - v)^2 + f(v) (Felzenszwalb &
// Huttenlocher), with infinite samples skipped.
void distance_1d(const double* f, double* d, Index n, double w2, std::vector<Index>& v, std::vector<double>& z) {
  v.resize(static_cast<std::size_t>(n));
  z.resize(static_cast<std::size_t>(n) + 1);
  Index k = -1;
  for (Index q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    double s = -kInf;
    while (k >= 0) {
      const Index p = v[static_cast<std::size_t>(k)];
      s = ((f[q] + w2 * static_cast<double>(q * q)) - (f[p] + w2 * static_cast<double>(p * p))) /
          (2.0 * w2 * static_cast<double>(q - p));
      if (s > z[static_cast<std::size_t>(k)]) break;
      --k;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = k == 0 ? -kInf : s;
    z[static_cast<std::size_t>(k) + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d, d + n, kInf);
    return;
  }
  Index j = 0;
  for (Index q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(j) + 1] < static_cast<double>(q)) ++j;
    const Index p = v[static_cast<std::size_t>(j)];
    const double dq = static_cast<double>(q - p);
    d[q] = w2 * dq * dq + f[p];
  }
}

// Squared distance (mm^2) from every voxel to the nearest voxel of `sites`.
Eigen::ArrayXd squared_distance_to(const Grid& g, const std::vector<Eigen::Vector3i>& sites,
                                   const Eigen::Vector3d& spacing) {
  Eigen::ArrayXd dist = Eigen::ArrayXd::Constant(g.voxel_count(), kInf);
  for (const auto& s : sites) dist[g.index(s.x(), s.y(), s.z())] = 0.0;
  const Index stride[3] = {1, g.nx(), g.slice_size()};
  for (int a = 0; a < 3; ++a) {
    const Index n = g.dims[a];
    const double w2 = spacing[a] * spacing[a];
    // lines along axis a indexed by the other two coordinates
    const int b = (a + 1) % 3, c = (a + 2) % 3;
    parallel_for(0, g.dims[c], [&](Index oc) {
      std::vector<double> line(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));
      std::vector<Index> v;
      std::vector<double> z;
      for (Index ob = 0; ob < g.dims[b]; ++ob) {
        const Index base = ob * stride[b] + oc * stride[c];
        for (Index q = 0; q < n; ++q) line[static_cast<std::size_t>(q)] = dist[base + q * stride[a]];
        distance_1d(line.data(), out.data(), n, w2, v, z);
        for (Index q = 0; q < n; ++q) dist[base + q * stride[a]] = out[static_cast<std::size_t>(q)];
      }
    });
  }
  return dist;
}

void append_distances(const Grid& g, const std::vector<Eigen::Vector3i>& from, const std::vector<Eigen::Vector3i>& to,
                      const Eigen::Vector3d& spacing, std::vector<double>& out) {
  const Eigen::ArrayXd d2 = squared_distance_to(g, to, spacing);
  for (const auto& p : from) out.push_back(std::sqrt(d2[g.index(p.x(), p.y(), p.z())]));
}

// Box sums over a (2r+1)^3 window clipped to the grid, separable.
Eigen::ArrayXd box_sum(const Eigen::ArrayXd& in, const Grid& g, Index r) {
  Eigen::ArrayXd cur = in, next(in.size());
  const Index stride[3] = {1, g.nx(), g.slice_size()};
  for (int a = 0; a < 3; ++a) {
    const Index n = g.dims[a];
    const int b = (a + 1) % 3, c = (a + 2) % 3;
    parallel_for(0, g.dims[c], [&](Index oc) {
      for (Index ob = 0; ob < g.dims[b]; ++ob) {
        const Index base = ob * stride[b] + oc * stride[c];
        for (Index q = 0; q < n; ++q) {
          double acc = 0.0;
          for (Index k = std::max<Index>(0, q - r); k <= std::min<Index>(n - 1, q + r); ++k)
            acc += cur[base + k * stride[a]];
          next[base + q * stride[a]] = acc;
        }
      }
    });
    std::swap(cur, next);
  }
  return cur;
}

}  // namespace

BinaryMask threshold(const ScalarVolume& vol, float level) {
  BinaryMask out(vol.grid());
  for (Index i = 0; i < vol.size(); ++i) out[i] = vol[i] >= level ? 1 : 0;
  return out;
}

ScalarVolume to_volume(const BinaryMask& mask) {
  ScalarVolume out(mask.grid());
  for (Index i = 0; i < mask.size(); ++i) out[i] = mask[i] ? 1.0f : 0.0f;
  return out;
}

BinaryMask propagate_mask(const BinaryMask& mask, const DisplacementField& field) {
  require_same_grid(mask.grid(), field.grid(), "propagate_mask");
  return threshold(warp(to_volume(mask), field), 0.5f);
}

double dsc(const BinaryMask& a, const BinaryMask& b) {
  require_same_grid(a.grid(), b.grid(), "dsc");
  std::size_t na = 0, nb = 0, both = 0;
  for (Index i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<Eigen::Vector3i> surface_voxels(const BinaryMask& mask) {
  const Grid& g = mask.grid();
  std::vector<Eigen::Vector3i> out;
  auto inside = [&](Index x, Index y, Index z) { return g.contains(x, y, z) && mask(x, y, z) != 0; };
  for (Index z = 0; z < g.nz(); ++z)
    for (Index y = 0; y < g.ny(); ++y)
      for (Index x = 0; x < g.nx(); ++x) {
        if (!mask(x, y, z)) continue;
        if (!inside(x - 1, y, z) || !inside(x + 1, y, z) || !inside(x, y - 1, z) || !inside(x, y + 1, z) ||
            !inside(x, y, z - 1) || !inside(x, y, z + 1))
          out.emplace_back(static_cast<int>(x), static_cast<int>(y), static_cast<int>(z));
      }
  return out;
}

SurfaceDistanceStats surface_distance(const BinaryMask& a, const BinaryMask& b, const Eigen::Vector3d& spacing,
                                      SurfaceDistanceMode mode) {
  require_same_grid(a.grid(), b.grid(), "surface_distance");
  require((spacing.array() > 0.0).all(), ErrorCode::InvalidArgument, "surface_distance: spacing must be positive");
  const auto sa = surface_voxels(a);
  const auto sb = surface_voxels(b);
  require(!sa.empty() && !sb.empty(), ErrorCode::EmptyMask, "surface_distance: both masks must be non-empty");

  std::vector<double> d;
  d.reserve(sa.size() + sb.size());
  append_distances(a.grid(), sa, sb, spacing, d);
  if (mode == SurfaceDistanceMode::Symmetric) append_distances(a.grid(), sb, sa, spacing, d);

  SurfaceDistanceStats s;
  s.n_surface_voxels = d.size();
  double sum = 0.0;
  for (double v : d) {
    sum += v;
    s.max = std::max(s.max, v);
  }
  s.mean = sum / static_cast<double>(d.size());
  double var = 0.0;
  for (double v : d) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(d.size()));
  return s;
}

double ssim(const ScalarVolume& a, const ScalarVolume& b) {
  require_same_grid(a.grid(), b.grid(), "ssim");
  const Grid& g = a.grid();
  const Eigen::ArrayXd x = a.data().cast<double>(), y = b.data().cast<double>();
  const double range = x.maxCoeff() - x.minCoeff();
  const double c1 = (0.01 * range) * (0.01 * range), c2 = (0.03 * range) * (0.03 * range);

  constexpr Index radius = 3;
  const Eigen::ArrayXd count = box_sum(Eigen::ArrayXd::Ones(x.size()), g, radius);
  const Eigen::ArrayXd mx = box_sum(x, g, radius) / count;
  const Eigen::ArrayXd my = box_sum(y, g, radius) / count;
  const Eigen::ArrayXd sxx = box_sum(x * x, g, radius) / count - mx * mx;
  const Eigen::ArrayXd syy = box_sum(y * y, g, radius) / count - my * my;
  const Eigen::ArrayXd sxy = box_sum(x * y, g, radius) / count - mx * my;

  double total = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * sxy[i] + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (sxx[i] + syy[i] + c2);
    total += den == 0.0 ? 1.0 : num / den;
  }
  return total / static_cast<double>(x.size());
}

double ncc(const ScalarVolume& a, const ScalarVolume& b) {
  require_same_grid(a.grid(), b.grid(), "ncc");
  const Eigen::ArrayXd x = a.data().cast<double>(), y = b.data().cast<double>();
  const Eigen::ArrayXd dx = x - x.mean(), dy = y - y.mean();
  const double vx = dx.square().sum(), vy = dy.square().sum();
  require(vx > 0.0 && vy > 0.0, ErrorCode::InvalidArgument, "ncc: inputs must have nonzero variance");
  return std::clamp((dx * dy).sum() / std::sqrt(vx * vy), -1.0, 1.0);
}

}  // namespace mindreg
