#include "prt/synthetic.hpp"

#include <cmath>
#include <random>

#include "prt/harmonics_oracle.hpp"

namespace prt {

Eigen::VectorXd clamped_cosine_zh() {
  // z_l = 2 int_0^1 mu P_l(mu) dmu, exact for 8 Gauss-Legendre nodes.
  Eigen::VectorXd nodes, weights;
  gauss_legendre(8, nodes, weights);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(kMaxShOrder + 1);
  for (Eigen::Index i = 0; i < nodes.size(); ++i) {
    const double mu = 0.5 * (nodes(i) + 1.0), w = 0.5 * weights(i);
    double p0 = 1.0, p1 = mu;
    for (int l = 0; l <= kMaxShOrder; ++l) {
      const double p = l == 0 ? p0 : p1;
      z(l) += 2.0 * w * mu * p;
      if (l >= 1) {
        const double next = ((2 * l + 1) * mu * p1 - l * p0) / (l + 1);
        p0 = p1;
        p1 = next;
      }
    }
  }
  return z;
}

void randomize_appearance(Scene& scene, const ToyRig& rig, std::uint64_t seed) {
  const Eigen::VectorXd cosine = clamped_cosine_zh();
  std::mt19937_64 chart_rng(stream_seed(seed, 0));
  std::vector<Eigen::Vector3d> base(static_cast<std::size_t>(rig.mesh.chart_count));
  for (auto& b : base) {
    b = Eigen::Vector3d(0.3 + 0.4 * uniform01(chart_rng), 0.3 + 0.4 * uniform01(chart_rng),
                        0.3 + 0.4 * uniform01(chart_rng));
  }
  for (std::size_t k = 0; k < scene.primitives.size(); ++k) {
    GaussianPrimitive& p = scene.primitives[k];
    std::mt19937_64 rng(stream_seed(seed, k + 1));
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
    const Eigen::Vector2d uv = rig.mesh.texel_uv(p.texel_id);
    const double wave = std::sin(9.0 * uv.x()) * std::cos(7.0 * uv.y());
    const Eigen::Vector3d tint(0.08 * wave, -0.05 * wave, 0.06 * std::sin(5.0 * (uv.x() + uv.y())));
    p.albedo = (base[static_cast<std::size_t>(rig.mesh.texel_chart(p.texel_id))] + tint +
                Eigen::Vector3d(uniform(-0.03, 0.03), uniform(-0.03, 0.03), uniform(-0.03, 0.03)))
                   .cwiseMax(0.05);

    p.transport = ZhLobes<double>{};
    const double occlusion = 0.75 + 0.2 * std::cos(6.0 * uv.x() + 4.0 * uv.y());
    for (int l = 0; l <= kMaxShOrder; ++l) {
      if (l > kColoredMaxBand) {
        p.transport.at(2, 0, l) = occlusion * cosine(l);
        continue;
      }
      for (int c = 0; c < 3; ++c) {
        const double color = l == 0 ? 1.0 : 1.0 + uniform(-0.1, 0.1);
        p.transport.at(2, c, l) = occlusion * color * cosine(l);
      }
    }
    // Weak lobes about the tangent axes, bands 1..3 only.
    for (int lobe = 0; lobe < 2; ++lobe) {
      const double s = uniform(-0.15, 0.15);
      for (int l = 1; l <= kColoredMaxBand; ++l) {
        for (int c = 0; c < 3; ++c) p.transport.at(lobe, c, l) = s * cosine(l);
      }
    }
    p.normal_offset = Eigen::Vector3d(uniform(-0.08, 0.08), uniform(-0.08, 0.08), uniform(-0.04, 0.04));
    p.specular_visibility = uniform(0.05, 0.35);
  }
}

Scene generate_scene(const RigSpec& spec, std::uint64_t seed) {
  const ToyRig rig = build_toy_rig(spec);
  Scene scene;
  scene.rig = spec;
  scene.pose_deg.assign(rig.joint_count(), 0.0);
  scene.primitives = seed_primitives(rig);
  randomize_appearance(scene, rig, seed);
  return scene;
}

Camera cluster_camera(int size) {
  return Camera::look_at(Eigen::Vector3d(0, 0, 3), Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitY(), 12.0,
                         size, size);
}

SplatCluster splat_cluster(int count, std::uint64_t seed) {
  SplatCluster out;
  std::mt19937_64 rng(mix_seed(seed));
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  for (int k = 0; k < count; ++k) {
    GaussianPrimitive p;
    p.texel_id = k;
    p.opacity = uniform(0.5, 0.9);
    p.scale = Eigen::Vector3d(uniform(0.06, 0.12), uniform(0.06, 0.12), 0.01);
    p.albedo = Eigen::Vector3d(uniform(0.2, 0.9), uniform(0.2, 0.9), uniform(0.2, 0.9));
    for (int i = 0; i < ZhLobes<double>::kSize; ++i) p.transport.values(i) = uniform(-0.3, 0.3);
    for (int lobe = 0; lobe < 3; ++lobe) {
      for (int c = 0; c < 3; ++c) p.transport.at(lobe, c, 0) = uniform(0.5, 1.0);
    }
    p.normal_offset = Eigen::Vector3d(uniform(-0.2, 0.2), uniform(-0.2, 0.2), uniform(-0.2, 0.2));
    p.specular_visibility = uniform(0.3, 0.9);
    p.roughness = uniform(0.15, 0.4);
    out.scene.primitives.push_back(p);

    // Tilted toward the camera at +z.
    const Eigen::Matrix3d r =
        (Eigen::AngleAxisd(uniform(-0.5, 0.5), Eigen::Vector3d::UnitX()) *
         Eigen::AngleAxisd(uniform(-0.5, 0.5), Eigen::Vector3d::UnitY()) *
         Eigen::AngleAxisd(uniform(0.0, 2.0 * M_PI), Eigen::Vector3d::UnitZ()))
            .toRotationMatrix();
    const Eigen::Vector3d mean(uniform(-0.08, 0.08), uniform(-0.08, 0.08), uniform(-0.1, 0.1));
    PosedPrimitives& posed = out.prepared.posed;
    posed.means.push_back(mean);
    posed.rotations.push_back(r);
    posed.rest_rotations.push_back(r);
    posed.covariances.push_back(covariance(r, p.scale));
    posed.mesh_normals.push_back(r.col(2));
    posed.opacities.push_back(p.opacity);
    out.prepared.bases.push_back(lobe_basis(r));
  }
  out.scene.sh_transport.resize(out.scene.primitives.size());
  for (std::size_t k = 0; k < out.scene.primitives.size(); ++k) {
    out.scene.sh_transport[k] =
        sh_transport_from_zh(out.scene.primitives[k].transport, out.prepared.bases[k]);
  }
  return out;
}

FitData cluster_fit_data(const SplatCluster& c, int size, std::uint64_t seed,
                         const ShadingConfig& config) {
  const LightRig dome = make_dome_rig(64);
  std::vector<Lighting> lightings;
  std::vector<Eigen::VectorXd> shadows;
  std::mt19937_64 rng(seed);
  for (const LightRig& rig : random_light_subsets(dome, 4, 3, 6, seed)) {
    lightings.push_back(make_lighting(rig));
    Eigen::VectorXd s(static_cast<Eigen::Index>(c.scene.primitives.size()));
    for (Eigen::Index k = 0; k < s.size(); ++k) s(k) = 0.4 + 0.6 * uniform01(rng);
    shadows.push_back(s);
  }
  const Camera cam = cluster_camera(size);
  FitData data = prepare_fit_data(c.prepared, std::span(&cam, 1), std::move(lightings), std::move(shadows));
  render_targets(c.scene, data, config);
  for (Image3& t : data.targets) {
    for (Eigen::Index i = 0; i < t.data().size(); ++i) {
      const double u = uniform01(rng);
      t.data().data()[i] += u < 0.5 ? -0.05 - 0.2 * u : 0.05 + 0.2 * (u - 0.5);
    }
  }
  return data;
}

std::vector<Camera> orbit_cameras(const Eigen::Vector3d& target, double distance,
                                  std::span<const double> azimuth_deg, double elevation_deg,
                                  double fov_y_deg, int width, int height) {
  std::vector<Camera> out;
  const double el = elevation_deg * M_PI / 180.0;
  for (double az_deg : azimuth_deg) {
    const double az = az_deg * M_PI / 180.0;
    const Eigen::Vector3d dir(std::sin(az) * std::cos(el), -std::cos(az) * std::cos(el), std::sin(el));
    out.push_back(Camera::look_at(target + distance * dir, target, Eigen::Vector3d::UnitZ(), fov_y_deg,
                                  width, height));
  }
  return out;
}

std::vector<Camera> rig_cameras(const RigSpec& spec, std::span<const double> azimuth_deg, int size) {
  if (spec.kind == RigKind::kHead) {
    return orbit_cameras(Eigen::Vector3d(0, 0, spec.neck_height), 1.2, azimuth_deg, 15.0, 25.0, size, size);
  }
  return orbit_cameras(Eigen::Vector3d(0.15, 0.0, 0.32), 2.5, azimuth_deg, 10.0, 32.0, size, size);
}

FitData make_training_data(const Scene& truth, const ToyRig& rig, const Pose& pose,
                           std::span<const LightRig> rigs, std::span<const Camera> cameras,
                           const ShadingConfig& config) {
  std::vector<Lighting> lightings;
  std::vector<Eigen::VectorXd> shadows;
  for (const LightRig& lr : rigs) {
    lightings.push_back(make_lighting(lr));
    if (config.shadow) {
      const IrradianceMap map = irradiance_uv_map(rig, pose, irradiance_lights(lr), kFullEnumeration, 0);
      shadows.push_back(primitive_shadow(map, truth.primitives));
    } else {
      shadows.emplace_back();
    }
  }
  FitData data = prepare_fit_data(prepare_scene(truth, rig, pose), cameras, std::move(lightings),
                                  std::move(shadows));
  render_targets(truth, data, config);
  return data;
}

RoundTrip make_round_trip(const RoundTripSpec& spec) {
  RoundTrip out;
  out.rig = build_toy_rig(spec.rig);
  out.truth = generate_scene(spec.rig, spec.scene_seed);
  const LightRig dome = make_dome_rig(spec.dome_lights);
  std::vector<LightRig> train =
      random_light_subsets(dome, spec.train_lightings, spec.min_on, spec.max_on, spec.light_seed);
  std::vector<LightRig> heldout = random_light_subsets(dome, spec.heldout_lightings, spec.min_on,
                                                       spec.max_on, stream_seed(spec.light_seed, 1));
  for (std::vector<LightRig>* set : {&train, &heldout}) {
    for (LightRig& r : *set) {
      const double each = 4.0 * M_PI * spec.radiance / static_cast<double>(r.active_count());
      for (PointLight& l : r.lights) l.intensity = Eigen::Vector3d::Constant(each);
    }
  }
  const std::vector<Camera> cameras = rig_cameras(spec.rig, spec.azimuths, spec.image_size);
  const std::size_t poses = spec.train_poses.size();
  if (poses == 0) fail(ErrorCode::kInvalidArgument, "round trip needs a training pose");
  for (std::size_t p = 0; p < poses; ++p) {
    std::vector<LightRig> mine;
    for (std::size_t i = p; i < train.size(); i += poses) mine.push_back(train[i]);
    const Pose pose = pose_from_angles(out.rig, spec.train_poses[p]);
    out.train.push_back(make_training_data(out.truth, out.rig, pose, mine, cameras, spec.config));
  }
  const Pose pose = pose_from_angles(out.rig, spec.heldout_pose);
  out.heldout.push_back(make_training_data(out.truth, out.rig, pose, heldout, cameras, spec.config));
  return out;
}

FitResult fit_round_trip(const RoundTrip& trip, const FitOptions& options) {
  Scene init = trip.truth;
  init.sh_transport.clear();
  init_appearance(init, trip.train.front().prepared, options.config.diffuse_basis);
  return fit_appearance(init, trip.train, trip.heldout, options);
}

}  // namespace prt
