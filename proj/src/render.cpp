#include "prt/render.hpp"

namespace prt {

Lighting make_lighting(const LightRig& rig) {
  Lighting out;
  out.lights = directional_lights(rig);
  out.sh = sh_project_directional(out.lights, kMaxShOrder);
  return out;
}

Lighting make_lighting(const EnvironmentMap& env) {
  Lighting out;
  out.sh = sh_project_env(env, kMaxShOrder);
  out.lights = directional_lights(env);
  return out;
}

PreparedScene prepare_scene(const Scene& scene, const ToyRig& rig, const Pose& pose) {
  PreparedScene out;
  out.posed = pose_primitives(scene.primitives, rig, pose);
  out.bases.resize(out.posed.size());
  parallel_for(out.posed.size(), [&](std::size_t k) { out.bases[k] = lobe_basis(out.posed.rotations[k]); });
  return out;
}

View prepare_view(const PreparedScene& prepared, const Camera& cam, const RasterConfig& config) {
  View view;
  view.camera = cam;
  view.splats = project_and_sort(prepared.posed.covariances, prepared.posed.means, cam, config);
  view.coverage = rasterize(view.splats, prepared.posed.opacities, cam.width, cam.height, config);
  return view;
}

TransportMatrix<double> primitive_transport(const Scene& scene, const PreparedScene& prepared,
                                            std::size_t k, TransportBasis basis) {
  if (basis == TransportBasis::kSh) {
    if (scene.sh_transport.size() != scene.primitives.size()) {
      fail(ErrorCode::kInvalidArgument, "SH transport requested but the scene has none");
    }
    return expand_sh_transport(scene.sh_transport[k]);
  }
  return transport_from_basis(scene.primitives[k].transport, prepared.bases[k]);
}

Eigen::Matrix3Xd primitive_diffuse(const Scene& scene, const PreparedScene& prepared,
                                   const ShVector<double>& light, TransportBasis basis) {
  if (light.order != kMaxShOrder || light.channels() != 3) {
    fail(ErrorCode::kInvalidArgument, "diffuse lighting must be order-8 RGB SH");
  }
  Eigen::Matrix3Xd out(3, static_cast<Eigen::Index>(scene.primitives.size()));
  parallel_for(scene.primitives.size(), [&](std::size_t k) {
    const TransportMatrix<double> d = primitive_transport(scene, prepared, k, basis);
    const Eigen::Vector3d dot = d.cwiseProduct(light.coeffs).colwise().sum().transpose();
    out.col(static_cast<Eigen::Index>(k)) = scene.primitives[k].albedo.cwiseProduct(dot);
  });
  return out;
}

Eigen::Matrix3Xd primitive_normals(const Scene& scene, const PreparedScene& prepared,
                                   NormalSource source) {
  Eigen::Matrix3Xd out(3, static_cast<Eigen::Index>(scene.primitives.size()));
  for (std::size_t k = 0; k < scene.primitives.size(); ++k) {
    out.col(static_cast<Eigen::Index>(k)) =
        source == NormalSource::kMesh
            ? prepared.posed.mesh_normals[k]
            : specular_normal(prepared.posed.rotations[k], scene.primitives[k].normal_offset);
  }
  return out;
}

Eigen::Matrix3Xd primitive_specular(const Scene& scene, const PreparedScene& prepared,
                                    const Eigen::Matrix3Xd& normals, const DirectionalLights& lights,
                                    const Camera& cam, SgNormalization norm) {
  const Eigen::Vector3d eye = cam.center();
  Eigen::Matrix3Xd out(3, normals.cols());
  parallel_for(scene.primitives.size(), [&](std::size_t k) {
    const GaussianPrimitive& p = scene.primitives[k];
    const Eigen::Vector3d w_o = (eye - prepared.posed.means[k]).normalized();
    out.col(static_cast<Eigen::Index>(k)) = specular_pixel(
        lights, normals.col(static_cast<Eigen::Index>(k)), p.roughness, p.specular_visibility, w_o, norm);
  });
  return out;
}

Image3 shade_forward(const Scene& scene, const PreparedScene& prepared, const View& view,
                     const DirectionalLights& lights, const ShadingConfig& config) {
  const Eigen::Matrix3Xd normals = primitive_normals(scene, prepared, config.normal);
  return composite<3>(view.coverage,
                      primitive_specular(scene, prepared, normals, lights, view.camera, config.sg));
}

RenderResult render(const Scene& scene, const PreparedScene& prepared, const View& view,
                    const Lighting& lighting, const ShadingConfig& config,
                    const Eigen::VectorXd& shadow) {
  const auto n = static_cast<Eigen::Index>(scene.primitives.size());
  if (shadow.size() != 0 && shadow.size() != n) {
    fail(ErrorCode::kInvalidArgument, "shadow vector needs one value per primitive");
  }
  PrimitiveAttributes attrs;
  attrs.diffuse = primitive_diffuse(scene, prepared, lighting.sh, config.diffuse_basis).cwiseMax(0.0);
  attrs.normals = primitive_normals(scene, prepared, config.normal);
  attrs.roughness.resize(n);
  attrs.visibility.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const GaussianPrimitive& p = scene.primitives[static_cast<std::size_t>(k)];
    check_roughness(p.roughness);
    attrs.roughness(k) = p.roughness;
    attrs.visibility(k) = p.specular_visibility;
  }
  if (config.shadow) attrs.shadow = shadow;

  RenderResult out;
  out.gbuffer = render_gbuffer(view.coverage, attrs);
  out.diffuse = out.gbuffer.diffuse;
  out.specular = config.deferred
                     ? shade_deferred(out.gbuffer, lighting.lights, view.camera,
                                      config.alpha_threshold, config.sg)
                     : composite<3>(view.coverage,
                                    primitive_specular(scene, prepared, attrs.normals,
                                                       lighting.lights, view.camera, config.sg));
  out.color = final_compose(out.diffuse, out.specular, out.gbuffer.shadow);
  return out;
}

}  // namespace prt
