#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "prt/common.hpp"
#include "prt/image.hpp"

namespace prt {

// Pinhole camera, OpenCV axes (x right, y down, z forward). Pixel (i, j)
// covers [i, i+1) x [j, j+1); its center is (i + 0.5, j + 0.5).
struct Camera {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  Eigen::Isometry3d world_to_camera = Eigen::Isometry3d::Identity();

  Eigen::Vector3d center() const;
  // World-space unit direction from the center through pixel coordinate p.
  Eigen::Vector3d ray_direction(const Eigen::Vector2d& p) const;
  // World point on the ray through p at camera depth z.
  Eigen::Vector3d unproject(const Eigen::Vector2d& p, double z) const;

  static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                        const Eigen::Vector3d& up, double fov_y_deg, int width, int height);
};

void check_camera(const Camera& cam);

struct RasterConfig {
  double near = 0.01;
  double dilation = 0.3;          // added to the 2D covariance diagonal, px^2
  double cutoff = 3.0;            // Mahalanobis radius of the kernel support
  double min_transmittance = 1e-7;
  int tile = 16;
};

struct Splat2D {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();
  Eigen::Matrix2d conic = Eigen::Matrix2d::Identity();  // cov^-1
  double depth = 0.0;
  int index = -1;  // source primitive
  double radius = 0.0;  // cutoff * sqrt(largest eigenvalue), px

  // Kernel value at pixel point p, 0 outside the cutoff ellipse.
  double kernel(const Eigen::Vector2d& p, double cutoff) const;
};

// J W Sigma W^T J^T plus dilation; empty when the mean is not beyond the
// near plane.
std::optional<Splat2D> project_gaussian(const Eigen::Matrix3d& covariance,
                                        const Eigen::Vector3d& mean, const Camera& cam,
                                        const RasterConfig& config = {});

// Projects and sorts front to back by camera depth (ties by index).
std::vector<Splat2D> project_and_sort(std::span<const Eigen::Matrix3d> covariances,
                                      std::span<const Eigen::Vector3d> means, const Camera& cam,
                                      const RasterConfig& config = {});

// Per-pixel blending weights w_k = o_k P_k prod_{j<k} (1 - o_j P_j), in depth
// order, stored as compressed rows over pixels (row-major pixel index).
struct Coverage {
  int width = 0, height = 0;
  std::vector<std::int64_t> offsets;  // size width * height + 1
  std::vector<int> ids;               // source primitive per entry
  std::vector<double> weights;
  std::vector<double> depths;         // camera depth of each splat, by primitive
  Image1 alpha;                       // 1 - final transmittance

  std::int64_t begin(Eigen::Index pixel) const { return offsets[static_cast<std::size_t>(pixel)]; }
  std::int64_t end(Eigen::Index pixel) const { return offsets[static_cast<std::size_t>(pixel) + 1]; }
};

// Tiled front-to-back compositing. `splats` must be sorted by depth;
// opacities are indexed by Splat2D::index.
Coverage rasterize(std::span<const Splat2D> splats, std::span<const double> opacities, int width,
                   int height, const RasterConfig& config = {});

// sum_k w_k c_k per pixel.
template <int C>
Image<C> composite(const Coverage& cov, const Eigen::Matrix<double, C, Eigen::Dynamic>& values) {
  Image<C> out(cov.width, cov.height);
  parallel_for(static_cast<std::size_t>(cov.height), [&](std::size_t y) {
    for (int x = 0; x < cov.width; ++x) {
      const Eigen::Index p = out.index(x, static_cast<int>(y));
      Eigen::Matrix<double, C, 1> acc = Eigen::Matrix<double, C, 1>::Zero();
      for (std::int64_t e = cov.begin(p); e < cov.end(p); ++e) {
        acc += cov.weights[static_cast<std::size_t>(e)] *
               values.col(cov.ids[static_cast<std::size_t>(e)]);
      }
      out.data().col(p) = acc;
    }
  });
  return out;
}

// Eq. 2 over explicitly ordered splats in one call; checks the ordering.
template <int C>
Image<C> composite(std::span<const Splat2D> splats,
                   const Eigen::Matrix<double, C, Eigen::Dynamic>& values,
                   std::span<const double> opacities, int width, int height,
                   const RasterConfig& config = {}) {
  return composite<C>(rasterize(splats, opacities, width, height, config), values);
}

// Per-pixel loop over every splat, no tiling and no early exit.
Eigen::MatrixXd composite_bruteforce(std::span<const Splat2D> splats, const Eigen::MatrixXd& values,
                                     std::span<const double> opacities, int width, int height,
                                     double cutoff = 3.0);

// Blended normals renormalized per pixel; zero where the blend vanishes.
Image3 composite_normals(const Coverage& cov, const Eigen::Matrix3Xd& normals);

// Alpha-normalized camera depth sum_k w_k z_k / alpha; 0 where alpha is 0.
Image1 composite_depth(const Coverage& cov);

// Alpha-normalized shadow, written as 1 - sum_k w_k (1 - s_k) / alpha so that
// s = 1 everywhere yields exactly 1. Uncovered pixels are 1.
Image1 composite_shadow(const Coverage& cov, const Eigen::VectorXd& shadow);

// Screen-space buffers for deferred shading.
struct GBuffer {
  Image3 diffuse;
  Image3 normal;
  Image1 roughness;
  Image1 visibility;
  Image1 shadow;
  Image1 alpha;
  Image1 depth;  // alpha-normalized camera z
};

// Per-primitive inputs of a G-buffer pass, one column/entry per primitive.
struct PrimitiveAttributes {
  Eigen::Matrix3Xd diffuse;
  Eigen::Matrix3Xd normals;
  Eigen::VectorXd roughness;
  Eigen::VectorXd visibility;
  Eigen::VectorXd shadow;  // empty means unshadowed
};

GBuffer render_gbuffer(const Coverage& cov, const PrimitiveAttributes& attrs);

}  // namespace prt
