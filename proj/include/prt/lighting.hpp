#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "prt/image.hpp"

namespace prt {

struct PointLight {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d intensity = Eigen::Vector3d::Ones();  // linear RGB, >= 0
};

// Light-stage style rig: fixed emitters on a dome plus an on/off mask.
struct LightRig {
  double radius = 2.75;
  std::vector<PointLight> lights;
  std::vector<bool> active;  // same length as lights

  std::size_t size() const { return lights.size(); }
  std::size_t active_count() const;
  bool is_active(std::size_t i) const { return active.empty() || active[i]; }
  void set_all(bool on) { active.assign(lights.size(), on); }
};

// Fibonacci-sphere dome centered at the origin. For an even count no light
// lies on the z = 0 plane and the upper/lower halves mirror each other.
LightRig make_dome_rig(int count = 1024, double radius = 2.75,
                       const Eigen::Vector3d& intensity = Eigen::Vector3d::Ones());

// Copies of `dome` with `count` random subsets of [min_on, max_on] lights on.
std::vector<LightRig> random_light_subsets(const LightRig& dome, int count, int min_on,
                                           int max_on, std::uint64_t seed);

// Lat-long radiance map. Row y spans polar angle theta in [y, y+1) * pi / H
// measured from +z; column x spans azimuth phi in [x, x+1) * 2 pi / W.
struct EnvironmentMap {
  Image3 radiance;

  int width() const { return radiance.width(); }
  int height() const { return radiance.height(); }
  Eigen::Vector3d direction(int x, int y) const;
  // (2 pi / W) (pi / H) sin(theta_y), evaluated at the pixel center.
  double solid_angle(int y) const;
};

// Distant lights as (direction, RGB weight) pairs. For point-light rigs the
// weight is the intensity; for environment maps it is radiance times solid
// angle, so sums over columns approximate integrals over the sphere.
struct DirectionalLights {
  Eigen::Matrix3Xd directions;
  Eigen::Matrix3Xd weights;

  Eigen::Index size() const { return directions.cols(); }
};

// Active lights seen from the scene origin (distant-light approximation).
DirectionalLights directional_lights(const LightRig& rig);
// Every pixel with non-zero radiance becomes one directional light.
DirectionalLights directional_lights(const EnvironmentMap& env);

}  // namespace prt
