#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "prt/render.hpp"

namespace prt {

// Regularizer weights. The scale term has no published weight and defaults
// to 1; LPIPS is not computed and its weight is only carried in configs.
struct LossWeights {
  double lpips = 0.1;
  double scale = 1.0;
  double offset = 0.05;
  double mask = 0.1;
  double normal = 1.0;  // value at step 0, annealed linearly to 0
  int normal_anneal_steps = 20000;
  double normal_orient = 0.1;
  double alpha_sparsity = 0.1;
  double bound = 0.01;
  double albedo = 0.01;
  double neg_color = 0.01;

  double normal_at(int step) const;
  // Every weight zero, the scale term included.
  static LossWeights none();

  bool operator==(const LossWeights&) const = default;
};

struct Range {
  double lb = 0.0;
  double ub = 0.0;
  bool operator==(const Range&) const = default;
};

struct Bounds {
  Range scale{1e-4, 1e-2};
  Range roughness{0.01, 0.25};
  bool operator==(const Bounds&) const = default;
};

// Mean absolute error over foreground pixels (mask > 0.5) and channels.
double loss_rec(const Image3& rendered, const Image3& target, const Image1& mask);

// 1 / max(v, 1e-7) below lb, (v - ub)^2 above ub, 0 inside.
double bound_penalty(double v, const Range& range);
double loss_bound(std::span<const double> values, const Range& range);

// Mean over foreground of max(0, n . d)^2 where d is the camera-to-surface
// ray direction, so normals turned away from the camera are penalized.
double loss_normal_orient(const Image3& normals, const Image3& view_dirs, const Image1& mask);

// Segmentation mask pixels whose 3x3 neighborhood is not uniform.
Image1 mask_boundary(const Image1& mask);

struct LossBreakdown {
  double rec = 0.0;
  double scale = 0.0;
  double offset = 0.0;
  double mask = 0.0;
  double normal = 0.0;
  double normal_orient = 0.0;
  double alpha_sparsity = 0.0;
  double bound = 0.0;
  double albedo = 0.0;     // squared negative diffuse colors
  double neg_color = 0.0;  // squared negative albedos
  double total = 0.0;

  bool operator==(const LossBreakdown&) const = default;

  // rec + scale + sum of weighted terms.
  double weighted(const LossWeights& w, int step) const;
};

// Inputs of the regularizers that do not depend on the rendered colors.
struct AuxInputs {
  std::span<const GaussianPrimitive> primitives;
  std::vector<Image1> alphas;     // rendered alpha per view
  std::vector<Image1> masks;      // segmentation mask per view
  std::vector<Image3> normals;    // deferred normals per view
  std::vector<Image3> view_dirs;  // camera-to-surface directions per view
  Eigen::Matrix3Xd diffuse;       // unclamped per-primitive diffuse colors
};

// Every regularizer term plus the weighted sum (rec is left at 0).
LossBreakdown loss_aux(const AuxInputs& in, const LossWeights& weights, const Bounds& bounds,
                       int step);

// PSNR over foreground pixels; +infinity for identical images.
double metric_psnr(const Image3& img, const Image3& ref, const Image1& mask, double peak = 1.0);
// Mean SSIM (11x11 Gaussian window, sigma 1.5) over foreground pixels whose
// window lies inside the image, averaged over channels.
double metric_ssim(const Image3& img, const Image3& ref, const Image1& mask);

// Fixed-geometry training set: one View per camera, lighting conditions,
// and per-lighting primitive shadow values.
struct FitData {
  PreparedScene prepared;
  std::vector<View> views;
  std::vector<Image1> masks;           // alpha > 0.5 per view
  std::vector<Image3> view_dirs;       // per view
  std::vector<Lighting> lightings;
  std::vector<Eigen::VectorXd> shadows;  // per lighting; empty means unshadowed
  std::vector<Image3> targets;           // lighting-major: lighting * views + view

  std::size_t observation_count() const { return lightings.size() * views.size(); }
  std::size_t observation(std::size_t lighting, std::size_t view) const {
    return lighting * views.size() + view;
  }
};

FitData prepare_fit_data(PreparedScene prepared, std::span<const Camera> cameras,
                         std::vector<Lighting> lightings, std::vector<Eigen::VectorXd> shadows,
                         const RasterConfig& raster = {});

// Renders data.targets from a scene that shares the data's geometry.
void render_targets(const Scene& scene, FitData& data, const ShadingConfig& config);

enum class ParamClass {
  kAlbedo,
  kTransport,
  kVisibility,
  kRoughness,
  kNormalOffset,
  // Geometry; frozen during fitting.
  kOffset,
  kRotation,
  kScale,
  kOpacity,
};

struct AppearanceGradient {
  Eigen::Matrix3Xd albedo;
  Eigen::MatrixXd transport;  // 51 (ZH) or 113 (SH) rows, one column per primitive
  Eigen::VectorXd visibility;
  Eigen::VectorXd roughness;
  Eigen::Matrix3Xd normal_offset;

  void resize(Eigen::Index primitives, int transport_rows);
  void set_zero();
  AppearanceGradient& operator+=(const AppearanceGradient& other);
};

struct Evaluation {
  LossBreakdown loss;
  AppearanceGradient grad;  // empty unless requested
};

// Loss over the selected lighting conditions (all views each) plus the
// regularizers, and optionally its analytic gradient. Geometry classes in
// `requested` are a contract violation. Shadow is held constant.
Evaluation evaluate_appearance(const Scene& scene, const FitData& data,
                               std::span<const std::size_t> lightings, const ShadingConfig& config,
                               const LossWeights& weights, const Bounds& bounds, int step,
                               std::span<const ParamClass> requested);

// Gradient for every lighting condition of `data`.
AppearanceGradient grad_appearance(const Scene& scene, const FitData& data,
                                   const ShadingConfig& config, const LossWeights& weights,
                                   const Bounds& bounds, int step,
                                   std::span<const ParamClass> requested);

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool operator==(const AdamConfig&) const = default;
};

class Adam {
 public:
  Adam(Eigen::Index size, const AdamConfig& config);
  void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad);
  int steps() const { return t_; }

 private:
  AdamConfig config_;
  Eigen::VectorXd m_, v_;
  int t_ = 0;
};

struct FitOptions {
  int steps = 2000;
  AdamConfig adam;
  LossWeights weights;
  Bounds bounds;
  bool optimize_roughness = false;
  int batch = 0;  // lighting conditions per step; 0 uses all
  std::uint64_t seed = 0;
  ShadingConfig config;
};

struct TraceRow {
  int step = 0;
  LossBreakdown loss;
};

struct FitMetrics {
  double psnr = 0.0;
  double ssim = 0.0;
};

struct FitResult {
  Scene scene;
  std::vector<TraceRow> trace;
  FitMetrics train;
  FitMetrics heldout;  // zero when no held-out data is given
};

// Parameter classes optimized by `options`.
std::vector<ParamClass> fitted_classes(const FitOptions& options);

// Initial appearance: gray albedo, band-0 transport, v = 0.1, sigma = 0.1,
// no normal offset. In SH mode the SH transport is the rest-frame expansion
// of that zonal transport.
void init_appearance(Scene& scene, const PreparedScene& prepared, TransportBasis basis);

// Adam on the mean of the per-dataset objectives; one dataset per pose.
// Dataset d draws its lighting batch from stream_seed(seed, d), except
// dataset 0 which uses the seed directly.
FitResult fit_appearance(const Scene& initial, std::span<const FitData> train,
                         std::span<const FitData> heldout, const FitOptions& options);
FitResult fit_appearance(const Scene& initial, const FitData& train, const FitData* heldout,
                         const FitOptions& options);

// Pooled-MSE PSNR and mean SSIM of `scene` against every target of `data`.
FitMetrics evaluate_metrics(const Scene& scene, std::span<const FitData> data, const ShadingConfig& config);
FitMetrics evaluate_metrics(const Scene& scene, const FitData& data, const ShadingConfig& config);

}  // namespace prt
