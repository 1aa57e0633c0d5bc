#pragma once

#include <cmath>

#include <Eigen/Core>

#include "prt/common.hpp"
#include "prt/harmonics.hpp"
#include "prt/lighting.hpp"
#include "prt/splat.hpp"

namespace prt {

// Largest roughness accepted by the specular lobe, radians.
inline constexpr double kMaxRoughness = M_PI;

// Normalization of the spherical Gaussian. kPrinted uses the pi^(2/3) of the
// paper's lobe as printed; kGaussian uses the conventional pi^(3/2).
enum class SgNormalization { kPrinted, kGaussian };

struct SgLobe {
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  double sigma = 0.1;
};

inline double sg_amplitude(double sigma, SgNormalization norm = SgNormalization::kPrinted) {
  const double c = norm == SgNormalization::kPrinted ? std::pow(M_PI, 2.0 / 3.0)
                                                     : std::pow(M_PI, 1.5);
  return 1.0 / (M_SQRT2 * c * sigma);
}

inline void check_roughness(double sigma) {
  if (!(sigma > 0.0 && sigma <= kMaxRoughness)) {
    fail(ErrorCode::kInvalidRoughness, "roughness " + std::to_string(sigma) + " outside (0, pi]");
  }
}

// A exp(-0.5 (acos(p . q) / sigma)^2), dot product clamped to [-1, 1].
double sg_eval(const Eigen::Vector3d& p, const SgLobe& lobe,
               SgNormalization norm = SgNormalization::kPrinted);

// The specular sums skip lights farther than this many sigma from the lobe
// axis; their weight is below e^-32 of the peak.
inline constexpr double kSgCutoffSigmas = 8.0;

// Cosine of the cutoff angle, or -2 when the cutoff covers the sphere.
inline double sg_cutoff_cos(double sigma) {
  const double angle = kSgCutoffSigmas * sigma;
  return angle >= M_PI ? -2.0 : std::cos(angle);
}

// 2 (n . w) n - w.
inline Eigen::Vector3d reflect(const Eigen::Vector3d& n, const Eigen::Vector3d& w) {
  return 2.0 * n.dot(w) * n - w;
}

// rho * sum_i L_i d_i per channel, unclamped. Both inputs have 3 channels.
Eigen::Vector3d diffuse_radiance(const Eigen::Vector3d& albedo, const ShVector<double>& transport,
                                 const ShVector<double>& light);
// The same, clamped at zero.
Eigen::Vector3d diffuse_color(const Eigen::Vector3d& albedo, const ShVector<double>& transport,
                              const ShVector<double>& light);

// v * sum_j w_j G(w_j; reflect(n, w_o), sigma) over directional lights,
// skipping lights beyond the cutoff.
Eigen::Vector3d specular_pixel(const DirectionalLights& lights, const Eigen::Vector3d& normal,
                               double sigma, double visibility, const Eigen::Vector3d& w_o,
                               SgNormalization norm = SgNormalization::kPrinted);

// Per-pixel specular from a G-buffer. Pixels with alpha <= threshold are 0.
Image3 shade_deferred(const GBuffer& gbuffer, const DirectionalLights& lights, const Camera& cam,
                      double alpha_threshold = 0.01,
                      SgNormalization norm = SgNormalization::kPrinted);

// (c_d + c_s) * shadow.
Image3 final_compose(const Image3& diffuse, const Image3& specular, const Image1& shadow);

}  // namespace prt
