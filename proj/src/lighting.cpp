#include "prt/lighting.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "prt/common.hpp"

namespace prt {

std::size_t LightRig::active_count() const {
  if (active.empty()) return lights.size();
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), true));
}

LightRig make_dome_rig(int count, double radius, const Eigen::Vector3d& intensity) {
  if (count <= 0 || !(radius > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "dome rig needs a positive count and radius");
  }
  LightRig rig;
  rig.radius = radius;
  rig.lights.resize(static_cast<std::size_t>(count));
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    rig.lights[static_cast<std::size_t>(i)].position =
        radius * Eigen::Vector3d(r * std::cos(phi), r * std::sin(phi), z);
    rig.lights[static_cast<std::size_t>(i)].intensity = intensity;
  }
  rig.set_all(true);
  return rig;
}

std::vector<LightRig> random_light_subsets(const LightRig& dome, int count, int min_on,
                                           int max_on, std::uint64_t seed) {
  if (min_on < 1 || max_on < min_on || static_cast<std::size_t>(max_on) > dome.size()) {
    fail(ErrorCode::kInvalidArgument, "light subset bounds out of range");
  }
  std::mt19937_64 rng(stream_seed(seed, 0x11647));
  std::vector<LightRig> out;
  out.reserve(static_cast<std::size_t>(count));
  std::vector<std::size_t> order(dome.size());
  for (int c = 0; c < count; ++c) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    const int span = max_on - min_on + 1;
    const int on = min_on + static_cast<int>(uniform01(rng) * span);
    // Partial Fisher-Yates: the first `on` entries form the subset.
    for (int i = 0; i < on; ++i) {
      const std::size_t remaining = order.size() - static_cast<std::size_t>(i);
      const std::size_t j =
          static_cast<std::size_t>(i) + static_cast<std::size_t>(uniform01(rng) * remaining);
      std::swap(order[static_cast<std::size_t>(i)], order[j]);
    }
    LightRig rig = dome;
    rig.set_all(false);
    for (int i = 0; i < on; ++i) rig.active[order[static_cast<std::size_t>(i)]] = true;
    out.push_back(std::move(rig));
  }
  return out;
}

Eigen::Vector3d EnvironmentMap::direction(int x, int y) const {
  const double theta = (y + 0.5) * M_PI / height();
  const double phi = (x + 0.5) * 2.0 * M_PI / width();
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

double EnvironmentMap::solid_angle(int y) const {
  const double theta = (y + 0.5) * M_PI / height();
  return (2.0 * M_PI / width()) * (M_PI / height()) * std::sin(theta);
}

DirectionalLights directional_lights(const LightRig& rig) {
  DirectionalLights out;
  const auto n = static_cast<Eigen::Index>(rig.active_count());
  out.directions.resize(3, n);
  out.weights.resize(3, n);
  Eigen::Index col = 0;
  for (std::size_t i = 0; i < rig.size(); ++i) {
    if (!rig.is_active(i)) continue;
    const double norm = rig.lights[i].position.norm();
    if (!(norm > 0.0)) fail(ErrorCode::kInvalidArgument, "light placed at the scene origin");
    out.directions.col(col) = rig.lights[i].position / norm;
    out.weights.col(col) = rig.lights[i].intensity;
    ++col;
  }
  return out;
}

DirectionalLights directional_lights(const EnvironmentMap& env) {
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < env.radiance.size(); ++i) {
    if (!env.radiance.data().col(i).isZero(0.0)) ++n;
  }
  DirectionalLights out;
  out.directions.resize(3, n);
  out.weights.resize(3, n);
  Eigen::Index col = 0;
  for (int y = 0; y < env.height(); ++y) {
    const double dw = env.solid_angle(y);
    for (int x = 0; x < env.width(); ++x) {
      const auto rad = env.radiance.pixel(x, y);
      if (rad.isZero(0.0)) continue;
      out.directions.col(col) = env.direction(x, y);
      out.weights.col(col) = rad * dw;
      ++col;
    }
  }
  return out;
}

}  // namespace prt
