#include "mindreg/phantom.hpp"

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "mindreg/parallel.hpp"
#include "mindreg/sampling.hpp"

namespace mindreg {
namespace {

constexpr double kBackground = 100.0;
constexpr double kOrganOffset = 60.0;
constexpr double kBlobAmplitude = 40.0;
constexpr double kBlobSigmaMin = 1.5;
constexpr double kBlobSigmaMax = 3.0;
constexpr double kBlobSupport = 3.5;  // in blob sigmas
constexpr double kVoxelsPerBlob = 64.0;

// Portable uniform [0, 1) from the raw 64-bit engine output.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Sum of compactly supported Gaussian blobs, evaluated at arbitrary points
/// through a bucket grid with cell size equal to the largest support radius.
class BlobTexture {
 public:
  BlobTexture(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, std::uint64_t seed) : lo_(lo) {
    std::mt19937_64 rng(seed);
    const Eigen::Vector3d extent = hi - lo;
    const auto count = static_cast<std::size_t>(extent.prod() / kVoxelsPerBlob);
    cell_ = kBlobSupport * kBlobSigmaMax;
    cells_ = (extent / cell_).array().ceil().cast<int>().max(1);
    buckets_.resize(static_cast<std::size_t>(cells_.prod()));
    blobs_.reserve(count);
    for (std::size_t b = 0; b < count; ++b) {
      Blob blob;
      for (int a = 0; a < 3; ++a) blob.center[a] = lo[a] + uniform01(rng) * extent[a];
      blob.sigma = kBlobSigmaMin + uniform01(rng) * (kBlobSigmaMax - kBlobSigmaMin);
      blob.amplitude = (2.0 * uniform01(rng) - 1.0) * kBlobAmplitude;
      blob.radius2 = std::pow(kBlobSupport * blob.sigma, 2);
      blob.floor = std::exp(-0.5 * kBlobSupport * kBlobSupport);
      blobs_.push_back(blob);
      buckets_[static_cast<std::size_t>(cell_index(cell_of(blob.center)))].push_back(blobs_.size() - 1);
    }
  }

  double operator()(const Eigen::Vector3d& p) const {
    const Eigen::Vector3i c = cell_of(p);
    double acc = 0.0;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const Eigen::Vector3i n = c + Eigen::Vector3i(dx, dy, dz);
          if ((n.array() < 0).any() || (n.array() >= cells_.array()).any()) continue;
          for (std::size_t b : buckets_[static_cast<std::size_t>(cell_index(n))]) {
            const Blob& blob = blobs_[b];
            const double r2 = (p - blob.center).squaredNorm();
            if (r2 >= blob.radius2) continue;
            // shifted so the blob vanishes continuously at its support edge
            acc += blob.amplitude * (std::exp(-0.5 * r2 / (blob.sigma * blob.sigma)) - blob.floor) / (1.0 - blob.floor);
          }
        }
    return acc;
  }

 private:
  struct Blob {
    Eigen::Vector3d center;
    double sigma, amplitude, radius2, floor;
  };

  Eigen::Vector3i cell_of(const Eigen::Vector3d& p) const {
    return ((p - lo_) / cell_).array().floor().cast<int>().max(0).min(cells_.array() - 1);
  }
  Index cell_index(const Eigen::Vector3i& c) const {
    return c.x() + static_cast<Index>(cells_.x()) * (c.y() + static_cast<Index>(cells_.y()) * c.z());
  }

  Eigen::Vector3d lo_;
  double cell_;
  Eigen::Vector3i cells_;
  std::vector<Blob> blobs_;
  std::vector<std::vector<std::size_t>> buckets_;
};

template <typename Fn>
void fill(ScalarVolume& vol, Fn&& fn) {
  const Grid& g = vol.grid();
  parallel_for(0, g.nz(), [&](Index z) {
    for (Index y = 0; y < g.ny(); ++y)
      for (Index x = 0; x < g.nx(); ++x)
        vol(x, y, z) = static_cast<float>(fn(Eigen::Vector3d(static_cast<double>(x), static_cast<double>(y),
                                                             static_cast<double>(z))));
  });
}

ScalarVolume soft_map(const BinaryMask& organ) {
  ScalarVolume p(organ.grid());
  for (Index i = 0; i < organ.size(); ++i) p[i] = organ[i] ? 1.0f : 0.0f;
  p = gaussian_smooth(p, 1.0);
  p.data() = p.data().max(0.0f).min(1.0f);
  return p;
}

nlohmann::json vec_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

PhantomCase sliding_slab_phantom(const SlabPhantomParams& params) {
  const Eigen::Vector3i& dims = params.dims;
  require((dims.array() >= 32).all(), ErrorCode::InvalidArgument, "slab phantom needs at least 32 voxels per axis");
  require(params.shift.allFinite() && std::isfinite(params.contrast_delta) && params.contrast_delta > -1.0,
          ErrorCode::InvalidArgument, "slab phantom: shift and contrast must be finite, contrast > -1");
  require(params.shift.z() == 0.0, ErrorCode::InvalidArgument,
          "slab phantom: shift must be tangential to the z boundary plane");
  for (int a = 0; a < 3; ++a)
    require(std::abs(params.shift[a]) <= dims[a] / 8.0, ErrorCode::InvalidArgument,
            "slab phantom: shift exceeds dims/8");

  const Grid grid(dims);
  const Eigen::Vector3d shift = params.shift;
  const Index boundary = dims.z() / 2;
  const double margin = kBlobSupport * kBlobSigmaMax + shift.cwiseAbs().maxCoeff();
  const BlobTexture texture(Eigen::Vector3d::Constant(-margin), dims.cast<double>() + Eigen::Vector3d::Constant(margin),
                            params.seed);
  const double gain = 1.0 + params.contrast_delta;
  auto in_organ = [&](const Eigen::Vector3d& p) { return p.z() >= static_cast<double>(boundary); };

  // target structure: a ball in the middle of the sliding half
  const Eigen::Vector3d center(0.5 * (dims.x() - 1), 0.5 * (dims.y() - 1), 0.5 * (boundary + dims.z() - 1));
  const double radius = dims.minCoeff() / 10.0;

  PhantomCase out;
  out.fixed = ScalarVolume(grid);
  out.moving = ScalarVolume(grid);
  fill(out.fixed, [&](const Eigen::Vector3d& p) {
    return kBackground + texture(p) + (in_organ(p) ? kOrganOffset : 0.0);
  });
  fill(out.moving, [&](const Eigen::Vector3d& p) {
    if (!in_organ(p)) return kBackground + texture(p);
    return gain * (kBackground + kOrganOffset + texture(p - shift));
  });

  out.organ = BinaryMask(grid);
  out.mask = BinaryMask(grid);
  out.moving_mask = BinaryMask(grid);
  out.gt_field = DisplacementField(grid);
  for (Index z = 0; z < grid.nz(); ++z)
    for (Index y = 0; y < grid.ny(); ++y)
      for (Index x = 0; x < grid.nx(); ++x) {
        const Eigen::Vector3d p(static_cast<double>(x), static_cast<double>(y), static_cast<double>(z));
        const Index i = grid.index(x, y, z);
        out.organ[i] = in_organ(p);
        out.mask[i] = (p - center).norm() <= radius;
        out.moving_mask[i] = (p - center - shift).norm() <= radius;
        if (out.organ[i]) out.gt_field[i] = shift.cast<float>();
      }
  out.probability = soft_map(out.organ);
  out.parameters = {{"kind", "slab"},
                    {"dims", {dims.x(), dims.y(), dims.z()}},
                    {"shift", vec_json(shift)},
                    {"contrast_delta", params.contrast_delta},
                    {"seed", params.seed},
                    {"boundary_z", boundary},
                    {"boundary_normal", {0, 0, 1}},
                    {"target_center", vec_json(center)},
                    {"target_radius", radius}};
  return out;
}

PhantomCase gaussian_bump_phantom(const BumpPhantomParams& params) {
  const Eigen::Vector3i& dims = params.dims;
  require((dims.array() >= 16).all(), ErrorCode::InvalidArgument, "bump phantom needs at least 16 voxels per axis");
  require(std::isfinite(params.amplitude) && params.amplitude >= 0.0 && params.amplitude <= 6.0,
          ErrorCode::InvalidArgument, "bump phantom: amplitude must lie in [0, 6] voxels");
  require(std::isfinite(params.sigma) && params.sigma >= 4.0, ErrorCode::InvalidArgument,
          "bump phantom: sigma must be at least 4 voxels");
  require(params.direction.allFinite() && params.direction.norm() > 0.0, ErrorCode::InvalidArgument,
          "bump phantom: direction must be a nonzero vector");
  require(std::isfinite(params.contrast_delta) && params.contrast_delta > -1.0, ErrorCode::InvalidArgument,
          "bump phantom: contrast_delta must exceed -1");

  const Grid grid(dims);
  const Eigen::Vector3d dir = params.direction.normalized();
  const Eigen::Vector3d center = 0.5 * (dims.cast<double>() - Eigen::Vector3d::Ones());
  const double radius = std::min(1.5 * params.sigma, 0.5 * dims.minCoeff() - 3.0);
  const double inv2s2 = 1.0 / (2.0 * params.sigma * params.sigma);
  const double margin = kBlobSupport * kBlobSigmaMax + params.amplitude;
  const BlobTexture texture(Eigen::Vector3d::Constant(-margin), dims.cast<double>() + Eigen::Vector3d::Constant(margin),
                            params.seed);
  const double gain = 1.0 + params.contrast_delta;

  auto displacement = [&](const Eigen::Vector3d& x) -> Eigen::Vector3d {
    return params.amplitude * std::exp(-(x - center).squaredNorm() * inv2s2) * dir;
  };
  auto in_organ = [&](const Eigen::Vector3d& x) { return (x - center).norm() <= radius; };
  auto intensity = [&](const Eigen::Vector3d& x) {
    return kBackground + texture(x) + (in_organ(x) ? kOrganOffset : 0.0);
  };
  // fixed-point inverse of x -> x + gt(x); contractive for amplitude/sigma < 1.6
  auto inverse = [&](const Eigen::Vector3d& y) {
    Eigen::Vector3d x = y;
    for (int it = 0; it < 200; ++it) {
      const Eigen::Vector3d next = y - displacement(x);
      const double change = (next - x).norm();
      x = next;
      if (change < 1e-12) break;
    }
    return x;
  };

  PhantomCase out;
  out.fixed = ScalarVolume(grid);
  out.moving = ScalarVolume(grid);
  fill(out.fixed, intensity);
  fill(out.moving, [&](const Eigen::Vector3d& y) {
    const Eigen::Vector3d x = inverse(y);
    return (in_organ(x) ? gain : 1.0) * intensity(x);
  });

  out.organ = BinaryMask(grid);
  out.moving_mask = BinaryMask(grid);
  out.gt_field = DisplacementField(grid);
  for (Index z = 0; z < grid.nz(); ++z)
    for (Index y = 0; y < grid.ny(); ++y)
      for (Index x = 0; x < grid.nx(); ++x) {
        const Eigen::Vector3d p(static_cast<double>(x), static_cast<double>(y), static_cast<double>(z));
        const Index i = grid.index(x, y, z);
        out.organ[i] = in_organ(p);
        out.moving_mask[i] = in_organ(inverse(p));
        out.gt_field[i] = displacement(p).cast<float>();
      }
  out.mask = out.organ;
  out.probability = soft_map(out.organ);
  out.parameters = {{"kind", "bump"},
                    {"dims", {dims.x(), dims.y(), dims.z()}},
                    {"amplitude", params.amplitude},
                    {"sigma", params.sigma},
                    {"direction", vec_json(dir)},
                    {"center", vec_json(center)},
                    {"organ_radius", radius},
                    {"contrast_delta", params.contrast_delta},
                    {"seed", params.seed}};
  return out;
}

std::pair<double, double> endpoint_error(const DisplacementField& u, const DisplacementField& gt,
                                         const BinaryMask& roi) {
  require_same_grid(u.grid(), gt.grid(), "endpoint_error");
  require_same_grid(u.grid(), roi.grid(), "endpoint_error");
  const Eigen::Vector3d spacing = u.grid().spacing;
  double sum = 0.0, mx = 0.0;
  std::size_t n = 0;
  for (Index i = 0; i < u.size(); ++i) {
    if (!roi[i]) continue;
    const double e = ((u[i].cast<double>() - gt[i].cast<double>()).cwiseProduct(spacing)).norm();
    sum += e;
    mx = std::max(mx, e);
    ++n;
  }
  require(n > 0, ErrorCode::EmptyMask, "endpoint_error: roi is empty");
  return {sum / static_cast<double>(n), mx};
}

}  // namespace mindreg
