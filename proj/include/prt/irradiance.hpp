#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "prt/lighting.hpp"
#include "prt/scene.hpp"

namespace prt {

// Two-sided Moller-Trumbore test; true with the hit distance when the ray
// meets the triangle at t in (t_min, t_max).
bool intersect_triangle(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                        const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                        double t_min, double t_max, double* t_hit = nullptr);

// Axis-aligned bounding-volume hierarchy over a triangle soup; median split
// on the widest centroid axis, at most kLeafSize triangles per leaf.
class Bvh {
 public:
  static constexpr int kLeafSize = 4;

  Bvh() = default;
  Bvh(const Eigen::Matrix3Xd& vertices, const Eigen::Matrix3Xi& triangles);

  // Any hit in (t_min, t_max).
  bool occluded(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double t_min,
                double t_max) const;

  // Self-intersection offset: 1e-4 times the bounding radius.
  double epsilon() const { return epsilon_; }
  std::size_t triangle_count() const { return static_cast<std::size_t>(triangles_.cols()); }
  // Triangle ids of every leaf concatenated; a permutation of 0..n-1.
  const std::vector<int>& leaf_order() const { return order_; }

 private:
  struct Node {
    Eigen::Vector3d lo, hi;
    int left = -1, right = -1;  // children, or -1 for a leaf
    int first = 0, count = 0;   // range in order_
  };
  int build(int first, int count, const Eigen::Matrix3Xd& centroids);

  Eigen::Matrix3Xd vertices_;
  Eigen::Matrix3Xi triangles_;
  std::vector<Node> nodes_;
  std::vector<int> order_;
  double epsilon_ = 0.0;
};

bool occluded_exhaustive(const Eigen::Matrix3Xd& vertices, const Eigen::Matrix3Xi& triangles,
                         const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double t_min,
                         double t_max);

// 1 when the segment from origin + eps n along dir is free up to `range`.
int visibility(const Bvh& bvh, const Eigen::Vector3d& origin, const Eigen::Vector3d& normal,
               const Eigen::Vector3d& dir, double range = std::numeric_limits<double>::infinity());

// Sample count meaning "enumerate every light".
inline constexpr int kFullEnumeration = 0;

// Emitters as seen by the irradiance estimator: a scalar power per light
// and either a position (finite range) or a direction (infinite range).
struct IrradianceLights {
  Eigen::Matrix3Xd points;      // positions, or directions when distant
  Eigen::VectorXd power;
  bool distant = false;
};
// Active point lights; power is the mean of the RGB intensity.
IrradianceLights irradiance_lights(const LightRig& rig);
// Non-zero env-map pixels; power is mean radiance times solid angle.
IrradianceLights irradiance_lights(const EnvironmentMap& env);

// sum_j L_j Vis_j / sum_j L_j. With samples >= 1, lights are drawn with
// probability proportional to L_j and the estimate is the mean sampled
// visibility; samples == kFullEnumeration evaluates every light.
double normalized_irradiance(const Eigen::Vector3d& point, const Eigen::Vector3d& normal,
                             const IrradianceLights& lights, const Bvh& bvh, int samples,
                             std::uint64_t seed);
double normalized_irradiance(const Eigen::Vector3d& point, const Eigen::Vector3d& normal,
                             const LightRig& rig, const Bvh& bvh, int samples, std::uint64_t seed);
double env_map_irradiance(const Eigen::Vector3d& point, const Eigen::Vector3d& normal,
                          const EnvironmentMap& env, const Bvh& bvh, int samples, std::uint64_t seed);

// One value per texel id; charts are stacked vertically when viewed as an
// image of size grid x (grid * charts).
struct IrradianceMap {
  int grid = 0;
  int charts = 0;
  Eigen::VectorXd values;
  std::vector<bool> occupied;
  int samples = kFullEnumeration;
  std::uint64_t seed = 0;

  bool operator==(const IrradianceMap&) const = default;
};

// Texel t uses the RNG stream stream_seed(seed, t).
IrradianceMap irradiance_uv_map(const ToyRig& rig, const Pose& pose, const IrradianceLights& lights,
                                int samples, std::uint64_t seed);

struct ShadowOperator {
  enum class Kind { kIdentity, kBlur } kind = Kind::kIdentity;
  int radius = 2;  // texels; the Gaussian sigma is radius / 2
};

// Identity, or a separable Gaussian blur within each chart that averages
// only occupied texels.
IrradianceMap apply_shadow_operator(const IrradianceMap& map, const ShadowOperator& op);

// Per-primitive shadow values looked up by texel id.
Eigen::VectorXd primitive_shadow(const IrradianceMap& map, const std::vector<GaussianPrimitive>& primitives);

}  // namespace prt
