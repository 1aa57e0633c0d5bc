#pragma once

#include <vector>

#include <Eigen/Core>

#include "prt/harmonics.hpp"
#include "prt/lighting.hpp"
#include "prt/scene.hpp"
#include "prt/shading.hpp"
#include "prt/splat.hpp"

namespace prt {

enum class NormalSource { kGaussian, kMesh };

// Ablation switches; the default is the full model.
struct ShadingConfig {
  TransportBasis diffuse_basis = TransportBasis::kZh;
  bool deferred = true;
  bool shadow = true;
  NormalSource normal = NormalSource::kGaussian;
  SgNormalization sg = SgNormalization::kPrinted;
  double alpha_threshold = 0.01;

  bool operator==(const ShadingConfig&) const = default;
};

// Incident light in both forms used by the shading model.
struct Lighting {
  ShVector<double> sh;          // order 8, 3 channels
  DirectionalLights lights;
};
Lighting make_lighting(const LightRig& rig);
Lighting make_lighting(const EnvironmentMap& env);

// Pose-dependent, light-independent quantities of a scene.
struct PreparedScene {
  PosedPrimitives posed;
  std::vector<LobeBasis<double>> bases;  // SH basis at each primitive's axes
};
PreparedScene prepare_scene(const Scene& scene, const ToyRig& rig, const Pose& pose);

// Camera-dependent coverage; reused for every lighting condition.
struct View {
  Camera camera;
  std::vector<Splat2D> splats;
  Coverage coverage;
};
View prepare_view(const PreparedScene& prepared, const Camera& cam, const RasterConfig& config = {});

// Per-primitive transport as an 81 x 3 matrix for the configured basis.
TransportMatrix<double> primitive_transport(const Scene& scene, const PreparedScene& prepared,
                                            std::size_t k, TransportBasis basis);

// Unclamped diffuse radiance of every primitive, one column each.
Eigen::Matrix3Xd primitive_diffuse(const Scene& scene, const PreparedScene& prepared,
                                   const ShVector<double>& light, TransportBasis basis);

// Specular normals (Gaussian or mesh source), one column each.
Eigen::Matrix3Xd primitive_normals(const Scene& scene, const PreparedScene& prepared,
                                   NormalSource source);

// Specular color of each primitive at its center (forward shading).
Eigen::Matrix3Xd primitive_specular(const Scene& scene, const PreparedScene& prepared,
                                    const Eigen::Matrix3Xd& normals, const DirectionalLights& lights,
                                    const Camera& cam, SgNormalization norm);

struct RenderResult {
  GBuffer gbuffer;
  Image3 diffuse;
  Image3 specular;
  Image3 color;
};

// Full pipeline: per-primitive diffuse, G-buffer, deferred or forward
// specular, shadow composition. `shadow` holds one value per primitive and
// is ignored when config.shadow is off; an empty vector means unshadowed.
RenderResult render(const Scene& scene, const PreparedScene& prepared, const View& view,
                    const Lighting& lighting, const ShadingConfig& config,
                    const Eigen::VectorXd& shadow = {});

// Forward specular image: per-primitive colors blended with Eq. 2 weights.
Image3 shade_forward(const Scene& scene, const PreparedScene& prepared, const View& view,
                     const DirectionalLights& lights, const ShadingConfig& config);

}  // namespace prt
