#include "prt/harmonics.hpp"

namespace prt {

ShVector<double> sh_project_directional(const DirectionalLights& lights, int order) {
  ShVector<double> out(order, 3);
  Eigen::VectorXd basis(sh_count(order));
  for (Eigen::Index j = 0; j < lights.size(); ++j) {
    const Eigen::Vector3d dir = lights.directions.col(j);
    check_direction(dir);
    sh_eval_basis_unchecked<double>(dir.x(), dir.y(), dir.z(), order, basis.data());
    out.coeffs += basis * lights.weights.col(j).transpose();
  }
  return out;
}

ShVector<double> sh_project_point_lights(const LightRig& rig, int order) {
  return sh_project_directional(directional_lights(rig), order);
}

ShVector<double> sh_project_env(const EnvironmentMap& env, int order) {
  if (env.width() <= 0 || env.height() <= 0) {
    fail(ErrorCode::kMalformedInput, "environment map has no pixels");
  }
  ShVector<double> out(order, 3);
  Eigen::VectorXd basis(sh_count(order));
  for (int y = 0; y < env.height(); ++y) {
    const double dw = env.solid_angle(y);
    for (int x = 0; x < env.width(); ++x) {
      const Eigen::Vector3d dir = env.direction(x, y);
      sh_eval_basis_unchecked<double>(dir.x(), dir.y(), dir.z(), order, basis.data());
      out.coeffs += basis * (env.radiance.pixel(x, y) * dw).transpose();
    }
  }
  return out;
}

}  // namespace prt
