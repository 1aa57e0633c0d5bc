#include "prt/shading.hpp"

#include <algorithm>

namespace prt {

double sg_eval(const Eigen::Vector3d& p, const SgLobe& lobe, SgNormalization norm) {
  if (!(lobe.sigma > 0.0)) fail(ErrorCode::kInvalidRoughness, "lobe width must be positive");
  const double angle = std::acos(std::clamp(p.dot(lobe.axis), -1.0, 1.0)) / lobe.sigma;
  return sg_amplitude(lobe.sigma, norm) * std::exp(-0.5 * angle * angle);
}

namespace {

void check_same_layout(const ShVector<double>& a, const ShVector<double>& b) {
  if (a.order != b.order || a.coeffs.rows() != b.coeffs.rows()) {
    fail(ErrorCode::kInvalidArgument, "transport and light SH orders differ");
  }
  if (a.channels() != 3 || b.channels() != 3) {
    fail(ErrorCode::kInvalidArgument, "diffuse shading needs 3-channel SH vectors");
  }
}

}  // namespace

Eigen::Vector3d diffuse_radiance(const Eigen::Vector3d& albedo, const ShVector<double>& transport,
                                 const ShVector<double>& light) {
  check_same_layout(transport, light);
  const Eigen::Vector3d dot = transport.coeffs.cwiseProduct(light.coeffs).colwise().sum().transpose();
  return albedo.cwiseProduct(dot);
}

Eigen::Vector3d diffuse_color(const Eigen::Vector3d& albedo, const ShVector<double>& transport,
                              const ShVector<double>& light) {
  return diffuse_radiance(albedo, transport, light).cwiseMax(0.0);
}

Eigen::Vector3d specular_pixel(const DirectionalLights& lights, const Eigen::Vector3d& normal,
                               double sigma, double visibility, const Eigen::Vector3d& w_o,
                               SgNormalization norm) {
  check_roughness(sigma);
  const SgLobe lobe{reflect(normal, w_o), sigma};
  const double cutoff = sg_cutoff_cos(sigma);
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (Eigen::Index j = 0; j < lights.size(); ++j) {
    if (lobe.axis.dot(lights.directions.col(j)) < cutoff) continue;
    sum += lights.weights.col(j) * sg_eval(lights.directions.col(j), lobe, norm);
  }
  return visibility * sum;
}

Image3 shade_deferred(const GBuffer& g, const DirectionalLights& lights, const Camera& cam,
                      double alpha_threshold, SgNormalization norm) {
  const int w = g.alpha.width(), h = g.alpha.height();
  Image3 out(w, h);
  const Eigen::Vector3d eye = cam.center();
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < w; ++x) {
      if (!(g.alpha.pixel(x, y)(0) > alpha_threshold)) continue;
      const Eigen::Vector3d surface = cam.unproject(Eigen::Vector2d(x + 0.5, y + 0.5), g.depth.pixel(x, y)(0));
      const Eigen::Vector3d w_o = (eye - surface).normalized();
      out.pixel(x, y) = specular_pixel(lights, g.normal.pixel(x, y), g.roughness.pixel(x, y)(0),
                                       g.visibility.pixel(x, y)(0), w_o, norm);
    }
  });
  return out;
}

Image3 final_compose(const Image3& diffuse, const Image3& specular, const Image1& shadow) {
  if (diffuse.width() != specular.width() || diffuse.height() != specular.height() ||
      diffuse.width() != shadow.width() || diffuse.height() != shadow.height()) {
    fail(ErrorCode::kInvalidArgument, "image sizes differ");
  }
  Image3 out(diffuse.width(), diffuse.height());
  out.data() = (diffuse.data() + specular.data()).array().rowwise() * shadow.data().array();
  return out;
}

}  // namespace prt
