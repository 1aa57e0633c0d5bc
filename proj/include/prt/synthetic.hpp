#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "prt/fit.hpp"
#include "prt/irradiance.hpp"

namespace prt {

// Zonal coefficients of max(cos, 0) / pi for bands 0..8 in the zh_expand
// convention, so that band 0 is 1 and a constant light returns the albedo.
Eigen::VectorXd clamped_cosine_zh();

// Ground-truth appearance: smooth per-chart albedo, clamped-cosine transport
// with tinted low bands and weak tangent lobes, small normal offsets.
// Roughness stays at its initial value.
void randomize_appearance(Scene& scene, const ToyRig& rig, std::uint64_t seed);

// Toy rig geometry plus ground-truth appearance.
Scene generate_scene(const RigSpec& spec, std::uint64_t seed);

// A few primitives placed by hand in front of a camera at (0, 0, 3) looking
// at the origin, with random appearance. No rig is involved.
struct SplatCluster {
  Scene scene;
  PreparedScene prepared;
};
SplatCluster splat_cluster(int count, std::uint64_t seed);
Camera cluster_camera(int size);

// Four random lighting conditions of a 64-light dome with per-primitive
// shadows in [0.4, 1]. Targets are the cluster's own render pushed at least
// 0.05 away per channel, which keeps every L1 residual clear of its kink
// under small perturbations.
FitData cluster_fit_data(const SplatCluster& cluster, int size, std::uint64_t seed,
                         const ShadingConfig& config = {});

// Cameras on a circle around `target`, azimuth measured from -y (the front).
std::vector<Camera> orbit_cameras(const Eigen::Vector3d& target, double distance,
                                  std::span<const double> azimuth_deg, double elevation_deg,
                                  double fov_y_deg, int width, int height);

// Camera framing of the toy rig used by the experiments.
std::vector<Camera> rig_cameras(const RigSpec& spec, std::span<const double> azimuth_deg, int size);

// Training set with per-lighting shadows from irradiance maps (full
// enumeration) and targets rendered from `truth`.
FitData make_training_data(const Scene& truth, const ToyRig& rig, const Pose& pose,
                           std::span<const LightRig> rigs, std::span<const Camera> cameras,
                           const ShadingConfig& config);

// Self-consistency experiment: ground truth on a toy rig, training
// conditions spread round-robin over the training poses, held-out lighting
// conditions on a separate pose. Each lighting condition switches on a random
// subset of the dome; the active intensities share a total of 4 pi times
// `radiance`, roughly a constant environment of that radiance.
struct RoundTripSpec {
  RigSpec rig;
  std::uint64_t scene_seed = 1;
  std::vector<std::vector<double>> train_poses{{0.0, 0.0}, {90.0, 60.0}};
  std::vector<double> heldout_pose{45.0, 30.0};
  int dome_lights = 1024;
  int train_lightings = 16;
  int heldout_lightings = 4;
  int min_on = 64;
  int max_on = 256;
  std::uint64_t light_seed = 2;
  double radiance = 0.8;
  std::vector<double> azimuths{-30.0, 30.0};
  int image_size = 128;
  ShadingConfig config;  // used to render the targets
};

struct RoundTrip {
  ToyRig rig;
  Scene truth;
  std::vector<FitData> train;    // one per training pose
  std::vector<FitData> heldout;  // one
};

RoundTrip make_round_trip(const RoundTripSpec& spec);

// Fits from init_appearance on the truth geometry, in the basis of
// options.config.
FitResult fit_round_trip(const RoundTrip& trip, const FitOptions& options);

}  // namespace prt
