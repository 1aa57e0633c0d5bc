#include "prt/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace prt {

double LossWeights::normal_at(int step) const {
  if (normal_anneal_steps <= 0 || step >= normal_anneal_steps) return 0.0;
  return normal * (1.0 - static_cast<double>(std::max(step, 0)) / normal_anneal_steps);
}

LossWeights LossWeights::none() {
  LossWeights w;
  w.lpips = w.scale = w.offset = w.mask = w.normal = 0.0;
  w.normal_orient = w.alpha_sparsity = w.bound = w.albedo = w.neg_color = 0.0;
  return w;
}

double LossBreakdown::weighted(const LossWeights& w, int step) const {
  return rec + w.scale * scale + w.offset * offset + w.mask * mask + w.normal_at(step) * normal +
         w.normal_orient * normal_orient + w.alpha_sparsity * alpha_sparsity + w.bound * bound +
         w.albedo * albedo + w.neg_color * neg_color;
}

namespace {

void check_same_size(const Image3& a, const Image3& b, const Image1& mask) {
  if (a.width() != b.width() || a.height() != b.height() || a.width() != mask.width() ||
      a.height() != mask.height()) {
    fail(ErrorCode::kInvalidArgument, "image sizes differ");
  }
}

bool foreground(const Image1& mask, Eigen::Index p) { return mask.data()(0, p) > 0.5; }

Eigen::Index foreground_count(const Image1& mask) {
  return (mask.data().array() > 0.5).count();
}

}  // namespace

double loss_rec(const Image3& rendered, const Image3& target, const Image1& mask) {
  check_same_size(rendered, target, mask);
  double sum = 0.0;
  Eigen::Index n = 0;
  for (Eigen::Index p = 0; p < mask.size(); ++p) {
    if (!foreground(mask, p)) continue;
    sum += (rendered.data().col(p) - target.data().col(p)).cwiseAbs().sum();
    ++n;
  }
  return n == 0 ? 0.0 : sum / (3.0 * static_cast<double>(n));
}

double bound_penalty(double v, const Range& range) {
  if (v < range.lb) return 1.0 / std::max(v, 1e-7);
  if (v > range.ub) return (v - range.ub) * (v - range.ub);
  return 0.0;
}

namespace {

double bound_penalty_derivative(double v, const Range& range) {
  if (v < range.lb) return v > 1e-7 ? -1.0 / (v * v) : 0.0;
  if (v > range.ub) return 2.0 * (v - range.ub);
  return 0.0;
}

}  // namespace

double loss_bound(std::span<const double> values, const Range& range) {
  if (!(range.lb < range.ub)) fail(ErrorCode::kInvalidArgument, "bound range needs lb < ub");
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (double v : values) sum += bound_penalty(v, range);
  return sum / static_cast<double>(values.size());
}

double loss_normal_orient(const Image3& normals, const Image3& view_dirs, const Image1& mask) {
  check_same_size(normals, view_dirs, mask);
  double sum = 0.0;
  Eigen::Index n = 0;
  for (Eigen::Index p = 0; p < mask.size(); ++p) {
    if (!foreground(mask, p)) continue;
    const double d = std::max(0.0, normals.data().col(p).dot(view_dirs.data().col(p)));
    sum += d * d;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

Image1 mask_boundary(const Image1& mask) {
  const int w = mask.width(), h = mask.height();
  Image1 out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool center = mask.pixel(x, y)(0) > 0.5;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          if ((mask.pixel(xx, yy)(0) > 0.5) != center) out.pixel(x, y)(0) = 1.0;
        }
      }
    }
  }
  return out;
}

LossBreakdown loss_aux(const AuxInputs& in, const LossWeights& weights, const Bounds& bounds,
                       int step) {
  LossBreakdown out;
  const auto k = static_cast<double>(in.primitives.size());
  std::vector<double> scales, roughness;
  scales.reserve(in.primitives.size() * 3);
  roughness.reserve(in.primitives.size());
  for (const GaussianPrimitive& p : in.primitives) {
    out.scale += p.scale.cwiseAbs().sum();
    out.offset += p.offset.squaredNorm();
    out.normal += p.normal_offset.squaredNorm();
    out.neg_color += p.albedo.cwiseMin(0.0).squaredNorm();
    scales.insert(scales.end(), p.scale.data(), p.scale.data() + 3);
    roughness.push_back(p.roughness);
  }
  if (k > 0) {
    out.scale /= 3.0 * k;
    out.offset /= k;
    out.normal /= k;
    out.neg_color /= 3.0 * k;
  }
  out.bound = loss_bound(scales, bounds.scale) + loss_bound(roughness, bounds.roughness);
  if (in.diffuse.size() > 0) {
    out.albedo = in.diffuse.cwiseMin(0.0).squaredNorm() / static_cast<double>(in.diffuse.size());
  }

  const std::size_t views = in.alphas.size();
  for (std::size_t v = 0; v < views; ++v) {
    const Image1& alpha = in.alphas[v];
    const Image1& mask = in.masks[v];
    const Image1 edge = mask_boundary(mask);
    double mask_sum = 0.0;
    Eigen::Index mask_n = 0;
    double sparsity = 0.0;
    for (Eigen::Index p = 0; p < alpha.size(); ++p) {
      const double a = alpha.data()(0, p);
      sparsity += std::min(a, 1.0 - a);
      if (edge.data()(0, p) > 0.5) continue;
      mask_sum += std::abs(a - mask.data()(0, p));
      ++mask_n;
    }
    out.mask += mask_n == 0 ? 0.0 : mask_sum / static_cast<double>(mask_n);
    out.alpha_sparsity += alpha.size() == 0 ? 0.0 : sparsity / static_cast<double>(alpha.size());
    if (v < in.normals.size()) out.normal_orient += loss_normal_orient(in.normals[v], in.view_dirs[v], mask);
  }
  if (views > 0) {
    out.mask /= static_cast<double>(views);
    out.alpha_sparsity /= static_cast<double>(views);
    out.normal_orient /= static_cast<double>(views);
  }
  out.total = out.weighted(weights, step);
  return out;
}

double metric_psnr(const Image3& img, const Image3& ref, const Image1& mask, double peak) {
  check_same_size(img, ref, mask);
  double sum = 0.0;
  Eigen::Index n = 0;
  for (Eigen::Index p = 0; p < mask.size(); ++p) {
    if (!foreground(mask, p)) continue;
    sum += (img.data().col(p) - ref.data().col(p)).squaredNorm();
    n += 3;
  }
  if (n == 0) fail(ErrorCode::kInvalidArgument, "PSNR needs foreground pixels");
  if (sum == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / (sum / static_cast<double>(n)));
}

double metric_ssim(const Image3& img, const Image3& ref, const Image1& mask) {
  check_same_size(img, ref, mask);
  constexpr int kRadius = 5;
  constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
  double window[2 * kRadius + 1][2 * kRadius + 1];
  double total = 0.0;
  for (int dy = -kRadius; dy <= kRadius; ++dy) {
    for (int dx = -kRadius; dx <= kRadius; ++dx) {
      const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
      window[dy + kRadius][dx + kRadius] = g;
      total += g;
    }
  }
  const int w = img.width(), h = img.height();
  double sum = 0.0;
  Eigen::Index n = 0;
  for (int y = kRadius; y < h - kRadius; ++y) {
    for (int x = kRadius; x < w - kRadius; ++x) {
      if (!(mask.pixel(x, y)(0) > 0.5)) continue;
      for (int c = 0; c < 3; ++c) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = -kRadius; dy <= kRadius; ++dy) {
          for (int dx = -kRadius; dx <= kRadius; ++dx) {
            const double g = window[dy + kRadius][dx + kRadius] / total;
            const double a = img.pixel(x + dx, y + dy)(c), b = ref.pixel(x + dx, y + dy)(c);
            ma += g * a;
            mb += g * b;
            saa += g * a * a;
            sbb += g * b * b;
            sab += g * a * b;
          }
        }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cab = sab - ma * mb;
        sum += ((2 * ma * mb + kC1) * (2 * cab + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
        ++n;
      }
    }
  }
  if (n == 0) fail(ErrorCode::kInvalidArgument, "SSIM needs interior foreground pixels");
  return sum / static_cast<double>(n);
}

FitData prepare_fit_data(PreparedScene prepared, std::span<const Camera> cameras,
                         std::vector<Lighting> lightings, std::vector<Eigen::VectorXd> shadows,
                         const RasterConfig& raster) {
  if (shadows.empty()) shadows.resize(lightings.size());
  if (shadows.size() != lightings.size()) {
    fail(ErrorCode::kInvalidArgument, "one shadow vector per lighting condition is required");
  }
  FitData data;
  data.prepared = std::move(prepared);
  data.lightings = std::move(lightings);
  data.shadows = std::move(shadows);
  for (const Camera& cam : cameras) {
    data.views.push_back(prepare_view(data.prepared, cam, raster));
    const View& view = data.views.back();
    Image1 mask(cam.width, cam.height);
    mask.data() = (view.coverage.alpha.data().array() > 0.5).cast<double>().matrix();
    data.masks.push_back(std::move(mask));
    Image3 dirs(cam.width, cam.height);
    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) dirs.pixel(x, y) = cam.ray_direction(Eigen::Vector2d(x + 0.5, y + 0.5));
    }
    data.view_dirs.push_back(std::move(dirs));
  }
  return data;
}

void render_targets(const Scene& scene, FitData& data, const ShadingConfig& config) {
  data.targets.assign(data.observation_count(), Image3());
  parallel_for(data.observation_count(), [&](std::size_t o) {
    const std::size_t l = o / data.views.size(), v = o % data.views.size();
    data.targets[o] = render(scene, data.prepared, data.views[v], data.lightings[l], config, data.shadows[l]).color;
  });
}

void AppearanceGradient::resize(Eigen::Index primitives, int transport_rows) {
  albedo.resize(3, primitives);
  transport.resize(transport_rows, primitives);
  visibility.resize(primitives);
  roughness.resize(primitives);
  normal_offset.resize(3, primitives);
  set_zero();
}

void AppearanceGradient::set_zero() {
  albedo.setZero();
  transport.setZero();
  visibility.setZero();
  roughness.setZero();
  normal_offset.setZero();
}

AppearanceGradient& AppearanceGradient::operator+=(const AppearanceGradient& other) {
  albedo += other.albedo;
  transport += other.transport;
  visibility += other.visibility;
  roughness += other.roughness;
  normal_offset += other.normal_offset;
  return *this;
}

namespace {

// Specular sum without the visibility factor and its derivatives with
// respect to roughness and to the shading normal.
struct LobeDerivatives {
  Eigen::Vector3d value = Eigen::Vector3d::Zero();
  Eigen::Vector3d d_sigma = Eigen::Vector3d::Zero();
  Eigen::Matrix3d d_normal = Eigen::Matrix3d::Zero();  // rows: channel
};

LobeDerivatives lobe_derivatives(const DirectionalLights& lights, const Eigen::Vector3d& n, double sigma,
                                 const Eigen::Vector3d& w_o, SgNormalization norm) {
  LobeDerivatives out;
  const double amp = sg_amplitude(sigma, norm);
  const Eigen::Vector3d q = reflect(n, w_o);
  const double cutoff = sg_cutoff_cos(sigma);
  Eigen::Matrix3d d_q = Eigen::Matrix3d::Zero();
  for (Eigen::Index j = 0; j < lights.size(); ++j) {
    const Eigen::Vector3d l = lights.directions.col(j);
    if (q.dot(l) < cutoff) continue;
    const double x = std::clamp(q.dot(l), -1.0, 1.0);
    const double theta = std::acos(x);
    const double t = theta / sigma;
    const double e = amp * std::exp(-0.5 * t * t);
    out.value += lights.weights.col(j) * e;
    out.d_sigma += lights.weights.col(j) * (e * (t * t - 1.0) / sigma);
    if (std::abs(q.dot(l)) >= 1.0) continue;
    const double s = std::sqrt(1.0 - x * x);
    // d theta / dq = -l / s; theta / s -> 1 as x -> 1.
    const double ratio = s > 1e-12 ? theta / s : (x > 0.0 ? 1.0 : 0.0);
    d_q += lights.weights.col(j) * ((e * ratio / (sigma * sigma)) * l.transpose());
  }
  const Eigen::Matrix3d d_reflect = 2.0 * n * w_o.transpose() + 2.0 * n.dot(w_o) * Eigen::Matrix3d::Identity();
  out.d_normal = d_q * d_reflect;
  return out;
}

// Gradient with respect to the composited (unnormalized) normal from the
// gradient with respect to its normalization.
Eigen::Vector3d through_normalize(const Eigen::Vector3d& unit, double length, const Eigen::Vector3d& g) {
  return (g - unit * unit.dot(g)) / length;
}

struct Selection {
  bool albedo = false, transport = false, visibility = false, roughness = false, normal_offset = false;
  bool any() const { return albedo || transport || visibility || roughness || normal_offset; }
};

Selection select(std::span<const ParamClass> requested) {
  Selection s;
  for (ParamClass c : requested) {
    switch (c) {
      case ParamClass::kAlbedo: s.albedo = true; break;
      case ParamClass::kTransport: s.transport = true; break;
      case ParamClass::kVisibility: s.visibility = true; break;
      case ParamClass::kRoughness: s.roughness = true; break;
      case ParamClass::kNormalOffset: s.normal_offset = true; break;
      default:
        fail(ErrorCode::kContractViolation, "geometry parameters are frozen during fitting");
    }
  }
  return s;
}

int transport_rows(TransportBasis basis) { return texel_param_count(basis); }

// Per-primitive gradients with respect to the quantities a pixel blends:
// clamped diffuse color, specular color (forward), visibility, roughness
// and specular normal.
struct PrimitiveAdjoint {
  Eigen::Matrix3Xd diffuse;
  Eigen::Matrix3Xd specular;
  Eigen::VectorXd visibility;
  Eigen::VectorXd roughness;
  Eigen::Matrix3Xd normal;

  explicit PrimitiveAdjoint(Eigen::Index n)
      : diffuse(Eigen::Matrix3Xd::Zero(3, n)), specular(Eigen::Matrix3Xd::Zero(3, n)),
        visibility(Eigen::VectorXd::Zero(n)), roughness(Eigen::VectorXd::Zero(n)),
        normal(Eigen::Matrix3Xd::Zero(3, n)) {}

  PrimitiveAdjoint& operator+=(const PrimitiveAdjoint& o) {
    diffuse += o.diffuse;
    specular += o.specular;
    visibility += o.visibility;
    roughness += o.roughness;
    normal += o.normal;
    return *this;
  }
};

// Scatters a per-pixel gradient on the normalized deferred normal back to
// the primitive normals that were blended into it.
void scatter_normal(const Coverage& cov, const Eigen::Matrix3Xd& normals, Eigen::Index p,
                    const Eigen::Vector3d& g_unit, Eigen::Matrix3Xd& out) {
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (std::int64_t e = cov.begin(p); e < cov.end(p); ++e) {
    sum += cov.weights[static_cast<std::size_t>(e)] * normals.col(cov.ids[static_cast<std::size_t>(e)]);
  }
  const double length = sum.norm();
  if (!(length > 0.0)) return;
  const Eigen::Vector3d g = through_normalize(sum / length, length, g_unit);
  for (std::int64_t e = cov.begin(p); e < cov.end(p); ++e) {
    out.col(cov.ids[static_cast<std::size_t>(e)]) += cov.weights[static_cast<std::size_t>(e)] * g;
  }
}

// Backward pass of one rendered observation for dL/dcolor = scale * sign(residual).
void observation_adjoint(const View& view, const Lighting& lighting, const RenderResult& rr,
                         const Image3& target, const Image1& mask, const Eigen::Matrix3Xd& normals,
                         double scale, const ShadingConfig& config, PrimitiveAdjoint& adj) {
  const Coverage& cov = view.coverage;
  const GBuffer& g = rr.gbuffer;
  const Eigen::Vector3d eye = view.camera.center();
  for (Eigen::Index p = 0; p < mask.size(); ++p) {
    if (!foreground(mask, p)) continue;
    const Eigen::Vector3d r = rr.color.data().col(p) - target.data().col(p);
    const Eigen::Vector3d grad =
        scale * Eigen::Vector3d((r.array() > 0.0).cast<double>() - (r.array() < 0.0).cast<double>());
    const Eigen::Vector3d g_blend = g.shadow.data()(0, p) * grad;
    for (std::int64_t e = cov.begin(p); e < cov.end(p); ++e) {
      const int id = cov.ids[static_cast<std::size_t>(e)];
      const double w = cov.weights[static_cast<std::size_t>(e)];
      adj.diffuse.col(id) += w * g_blend;
      if (!config.deferred) adj.specular.col(id) += w * g_blend;
    }
    if (!config.deferred || !(g.alpha.data()(0, p) > config.alpha_threshold)) continue;
    const int x = static_cast<int>(p % g.alpha.width()), y = static_cast<int>(p / g.alpha.width());
    const Eigen::Vector3d surface = view.camera.unproject(Eigen::Vector2d(x + 0.5, y + 0.5), g.depth.data()(0, p));
    const Eigen::Vector3d w_o = (eye - surface).normalized();
    const Eigen::Vector3d n = g.normal.data().col(p);
    const double sigma = g.roughness.data()(0, p), v = g.visibility.data()(0, p);
    const LobeDerivatives lobe = lobe_derivatives(lighting.lights, n, sigma, w_o, config.sg);
    const double g_v = g_blend.dot(lobe.value);
    const double g_sigma = v * g_blend.dot(lobe.d_sigma);
    for (std::int64_t e = cov.begin(p); e < cov.end(p); ++e) {
      const int id = cov.ids[static_cast<std::size_t>(e)];
      const double w = cov.weights[static_cast<std::size_t>(e)];
      adj.visibility(id) += w * g_v;
      adj.roughness(id) += w * g_sigma;
    }
    if (config.normal == NormalSource::kGaussian) {
      scatter_normal(cov, normals, p, v * lobe.d_normal.transpose() * g_blend, adj.normal);
    }
  }
}

// Unalbedoed diffuse radiance per primitive and, for zonal transport, the
// band projections P(lobe, l, c) = sum_m Y_lm(axis_lobe) L_lm,c.
struct LightingCache {
  Eigen::Matrix3Xd radiance;    // d . L per channel
  Eigen::MatrixXd projections;  // 81 x K, index (lobe * 9 + l) * 3 + c
};

LightingCache lighting_cache(const Scene& scene, const FitData& data, const Lighting& lighting,
                             TransportBasis basis, bool projections) {
  const auto n = static_cast<Eigen::Index>(scene.primitives.size());
  LightingCache out;
  out.radiance.resize(3, n);
  if (projections) out.projections.resize(81, n);
  const Eigen::MatrixXd& light = lighting.sh.coeffs;
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const TransportMatrix<double> d = primitive_transport(scene, data.prepared, ks, basis);
    out.radiance.col(k) = d.cwiseProduct(light).colwise().sum().transpose();
    if (!projections) continue;
    const LobeBasis<double>& b = data.prepared.bases[ks];
    for (int lobe = 0; lobe < 3; ++lobe) {
      for (int l = 0; l <= kMaxShOrder; ++l) {
        for (int c = 0; c < 3; ++c) {
          double acc = 0.0;
          for (int m = -l; m <= l; ++m) acc += b(sh_index(l, m), lobe) * light(sh_index(l, m), c);
          out.projections((lobe * 9 + l) * 3 + c, k) = acc;
        }
      }
    }
  }
  return out;
}

// Chains diffuse adjoints (and the negative-diffuse regularizer) of one
// lighting condition to albedo and transport.
void diffuse_to_parameters(const Scene& scene, const LightingCache& cache, const Lighting& lighting,
                           const Eigen::Matrix3Xd& g_diffuse, double neg_diffuse_scale,
                           TransportBasis basis, const Selection& sel, AppearanceGradient& out) {
  const Eigen::MatrixXd& light = lighting.sh.coeffs;
  for (Eigen::Index k = 0; k < g_diffuse.cols(); ++k) {
    const GaussianPrimitive& prim = scene.primitives[static_cast<std::size_t>(k)];
    Eigen::Vector3d g_radiance = Eigen::Vector3d::Zero();
    for (int c = 0; c < 3; ++c) {
      const double u = cache.radiance(c, k);
      const double raw = prim.albedo(c) * u;
      double g_raw = raw > 0.0 ? g_diffuse(c, k) : 0.0;
      if (raw < 0.0) g_raw += neg_diffuse_scale * 2.0 * raw;
      out.albedo(c, k) += g_raw * u;
      g_radiance(c) = g_raw * prim.albedo(c);
    }
    if (!sel.transport || g_radiance.isZero(0.0)) continue;
    if (basis == TransportBasis::kZh) {
      for (int lobe = 0; lobe < 3; ++lobe) {
        for (int l = 0; l <= kMaxShOrder; ++l) {
          for (int c = 0; c < 3; ++c) {
            out.transport(ZhLobes<double>::index(lobe, c, l), k) +=
                g_radiance(c) * cache.projections((lobe * 9 + l) * 3 + c, k);
          }
        }
      }
    } else {
      for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < sh_count(kMaxShOrder); ++i) {
          out.transport(ShTransport<double>::index(c, i), k) += g_radiance(c) * light(i, c);
        }
      }
    }
  }
}

}  // namespace

Evaluation evaluate_appearance(const Scene& scene, const FitData& data,
                               std::span<const std::size_t> lightings, const ShadingConfig& config,
                               const LossWeights& weights, const Bounds& bounds, int step,
                               std::span<const ParamClass> requested) {
  const Selection sel = select(requested);
  const bool want_grad = sel.any();
  const auto n = static_cast<Eigen::Index>(scene.primitives.size());
  const std::size_t views = data.views.size();
  if (data.targets.size() != data.observation_count()) {
    fail(ErrorCode::kInvalidArgument, "fit data has no targets for every observation");
  }
  for (std::size_t l : lightings) {
    if (l >= data.lightings.size()) fail(ErrorCode::kInvalidArgument, "lighting index out of range");
  }
  const TransportBasis basis = config.diffuse_basis;
  const std::size_t obs_count = lightings.size() * views;

  // Light-independent per-view quantities.
  const Eigen::Matrix3Xd normals = primitive_normals(scene, data.prepared, config.normal);
  std::vector<Image3> view_normals(views);
  parallel_for(views, [&](std::size_t v) { view_normals[v] = composite_normals(data.views[v].coverage, normals); });

  // Per-lighting diffuse radiance.
  std::vector<LightingCache> caches(lightings.size());
  parallel_for(lightings.size(), [&](std::size_t i) {
    caches[i] = lighting_cache(scene, data, data.lightings[lightings[i]], basis,
                               want_grad && sel.transport && basis == TransportBasis::kZh);
  });

  // Reconstruction loss and pixel-level adjoints per observation.
  std::vector<double> rec(obs_count, 0.0);
  std::vector<PrimitiveAdjoint> adjoints;
  if (want_grad) adjoints.assign(obs_count, PrimitiveAdjoint(n));
  parallel_for(obs_count, [&](std::size_t o) {
    const std::size_t l = lightings[o / views], v = o % views;
    const View& view = data.views[v];
    const RenderResult rr = render(scene, data.prepared, view, data.lightings[l], config, data.shadows[l]);
    const Image3& target = data.targets[data.observation(l, v)];
    rec[o] = loss_rec(rr.color, target, data.masks[v]);
    if (!want_grad) return;
    const Eigen::Index fg = foreground_count(data.masks[v]);
    if (fg == 0) return;
    const double scale = 1.0 / (3.0 * static_cast<double>(fg) * static_cast<double>(obs_count));
    observation_adjoint(view, data.lightings[l], rr, target, data.masks[v], normals, scale, config,
                        adjoints[o]);
  });

  Evaluation out;
  AuxInputs aux;
  aux.primitives = scene.primitives;
  for (std::size_t v = 0; v < views; ++v) aux.alphas.push_back(data.views[v].coverage.alpha);
  aux.masks = data.masks;
  aux.normals = view_normals;
  aux.view_dirs = data.view_dirs;
  aux.diffuse.resize(3, n * static_cast<Eigen::Index>(lightings.size()));
  for (std::size_t i = 0; i < lightings.size(); ++i) {
    Eigen::Matrix3Xd raw(3, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      raw.col(k) = scene.primitives[static_cast<std::size_t>(k)].albedo.cwiseProduct(caches[i].radiance.col(k));
    }
    aux.diffuse.middleCols(static_cast<Eigen::Index>(i) * n, n) = raw;
  }
  out.loss = loss_aux(aux, weights, bounds, step);
  for (double r : rec) out.loss.rec += r;
  if (obs_count > 0) out.loss.rec /= static_cast<double>(obs_count);
  out.loss.total = out.loss.weighted(weights, step);
  if (!want_grad) return out;

  // Per-lighting chain to parameters, then a fixed-order sum.
  const int rows = transport_rows(basis);
  std::vector<AppearanceGradient> per_lighting(lightings.size());
  const double neg_diffuse_scale =
      aux.diffuse.size() > 0 ? weights.albedo / static_cast<double>(aux.diffuse.size()) : 0.0;
  parallel_for(lightings.size(), [&](std::size_t i) {
    PrimitiveAdjoint sum = adjoints[i * views];
    for (std::size_t v = 1; v < views; ++v) sum += adjoints[i * views + v];
    AppearanceGradient& g = per_lighting[i];
    g.resize(n, rows);
    diffuse_to_parameters(scene, caches[i], data.lightings[lightings[i]], sum.diffuse, neg_diffuse_scale,
                          basis, sel, g);
    if (!config.deferred) {
      // Forward shading: per-primitive lobe at the primitive center.
      const Lighting& lighting = data.lightings[lightings[i]];
      for (std::size_t v = 0; v < views; ++v) {
        const PrimitiveAdjoint& a = adjoints[i * views + v];
        const Eigen::Vector3d eye = data.views[v].camera.center();
        for (Eigen::Index k = 0; k < n; ++k) {
          if (a.specular.col(k).isZero(0.0)) continue;
          const auto ks = static_cast<std::size_t>(k);
          const GaussianPrimitive& p = scene.primitives[ks];
          const Eigen::Vector3d w_o = (eye - data.prepared.posed.means[ks]).normalized();
          const LobeDerivatives lobe = lobe_derivatives(lighting.lights, normals.col(k), p.roughness, w_o, config.sg);
          sum.visibility(k) += a.specular.col(k).dot(lobe.value);
          sum.roughness(k) += p.specular_visibility * a.specular.col(k).dot(lobe.d_sigma);
          if (config.normal == NormalSource::kGaussian) {
            sum.normal.col(k) += p.specular_visibility * lobe.d_normal.transpose() * a.specular.col(k);
          }
        }
      }
    }
    g.visibility = sum.visibility;
    g.roughness = sum.roughness;
    g.normal_offset = sum.normal;  // still with respect to the normal itself
  });

  AppearanceGradient& grad = out.grad;
  grad.resize(n, rows);
  for (const AppearanceGradient& g : per_lighting) grad += g;

  // Normal orientation regularizer on the deferred normals of each view.
  if (weights.normal_orient > 0.0 && config.normal == NormalSource::kGaussian && views > 0) {
    std::vector<Eigen::Matrix3Xd> per_view(views, Eigen::Matrix3Xd::Zero(3, n));
    parallel_for(views, [&](std::size_t v) {
      const Eigen::Index fg = foreground_count(data.masks[v]);
      if (fg == 0) return;
      const double scale = weights.normal_orient / (static_cast<double>(fg) * static_cast<double>(views));
      for (Eigen::Index p = 0; p < data.masks[v].size(); ++p) {
        if (!foreground(data.masks[v], p)) continue;
        const Eigen::Vector3d d = data.view_dirs[v].data().col(p);
        const double dot = view_normals[v].data().col(p).dot(d);
        if (!(dot > 0.0)) continue;
        scatter_normal(data.views[v].coverage, normals, p, 2.0 * dot * scale * d, per_view[v]);
      }
    });
    for (const auto& g : per_view) grad.normal_offset += g;
  }

  // Normal gradients to offsets: n = normalize(axis + dn).
  Eigen::Matrix3Xd g_offset = Eigen::Matrix3Xd::Zero(3, n);
  if (config.normal == NormalSource::kGaussian) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      const Eigen::Vector3d raw = data.prepared.posed.rotations[ks].col(2) + scene.primitives[ks].normal_offset;
      const double length = raw.norm();
      g_offset.col(k) = through_normalize(raw / length, length, grad.normal_offset.col(k));
    }
  }
  grad.normal_offset = g_offset;

  // Parameter-space regularizers.
  const double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
  const double lambda_normal = weights.normal_at(step);
  for (Eigen::Index k = 0; k < n; ++k) {
    const GaussianPrimitive& p = scene.primitives[static_cast<std::size_t>(k)];
    grad.normal_offset.col(k) += lambda_normal * 2.0 * inv_n * p.normal_offset;
    grad.albedo.col(k) += weights.neg_color * 2.0 * inv_n / 3.0 * p.albedo.cwiseMin(0.0);
    grad.roughness(k) += weights.bound * inv_n * bound_penalty_derivative(p.roughness, bounds.roughness);
  }
  if (!sel.albedo) grad.albedo.setZero();
  if (!sel.transport) grad.transport.setZero();
  if (!sel.visibility) grad.visibility.setZero();
  if (!sel.roughness) grad.roughness.setZero();
  if (!sel.normal_offset) grad.normal_offset.setZero();
  return out;
}

AppearanceGradient grad_appearance(const Scene& scene, const FitData& data, const ShadingConfig& config,
                                   const LossWeights& weights, const Bounds& bounds, int step,
                                   std::span<const ParamClass> requested) {
  std::vector<std::size_t> all(data.lightings.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return evaluate_appearance(scene, data, all, config, weights, bounds, step, requested).grad;
}

Adam::Adam(Eigen::Index size, const AdamConfig& config)
    : config_(config), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

void Adam::step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    fail(ErrorCode::kContractViolation, "parameter shape changed between steps");
  }
  ++t_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config_.beta1, t_);
  const double c2 = 1.0 - std::pow(config_.beta2, t_);
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    params(i) -= config_.lr * (m_(i) / c1) / (std::sqrt(v_(i) / c2) + config_.epsilon);
  }
}

std::vector<ParamClass> fitted_classes(const FitOptions& options) {
  std::vector<ParamClass> out{ParamClass::kAlbedo, ParamClass::kTransport, ParamClass::kVisibility};
  if (options.optimize_roughness) out.push_back(ParamClass::kRoughness);
  if (options.config.normal == NormalSource::kGaussian) out.push_back(ParamClass::kNormalOffset);
  return out;
}

void init_appearance(Scene& scene, const PreparedScene& prepared, TransportBasis basis) {
  for (GaussianPrimitive& p : scene.primitives) reset_appearance(p);
  scene.sh_transport.clear();
  if (basis != TransportBasis::kSh) return;
  scene.sh_transport.resize(scene.primitives.size());
  for (std::size_t k = 0; k < scene.primitives.size(); ++k) {
    scene.sh_transport[k] =
        sh_transport_from_zh(scene.primitives[k].transport, lobe_basis(prepared.posed.rest_rotations[k]));
  }
}

namespace {

// Flat parameter vector, primitive-major, in the order albedo, transport,
// visibility, roughness, normal offset (selected classes only).
int block_size(const Selection& sel, TransportBasis basis) {
  return (sel.albedo ? 3 : 0) + (sel.transport ? transport_rows(basis) : 0) + (sel.visibility ? 1 : 0) +
         (sel.roughness ? 1 : 0) + (sel.normal_offset ? 3 : 0);
}

Eigen::VectorXd pack(const Scene& scene, const Selection& sel, TransportBasis basis) {
  const int block = block_size(sel, basis);
  Eigen::VectorXd out(block * static_cast<Eigen::Index>(scene.primitives.size()));
  for (std::size_t k = 0; k < scene.primitives.size(); ++k) {
    const GaussianPrimitive& p = scene.primitives[k];
    Eigen::Index i = static_cast<Eigen::Index>(k) * block;
    if (sel.albedo) { out.segment<3>(i) = p.albedo; i += 3; }
    if (sel.transport) {
      if (basis == TransportBasis::kZh) {
        out.segment(i, ZhLobes<double>::kSize) = p.transport.values;
      } else {
        out.segment(i, ShTransport<double>::kSize) = scene.sh_transport[k].values;
      }
      i += transport_rows(basis);
    }
    if (sel.visibility) out(i++) = p.specular_visibility;
    if (sel.roughness) out(i++) = p.roughness;
    if (sel.normal_offset) out.segment<3>(i) = p.normal_offset;
  }
  return out;
}

Eigen::VectorXd pack(const AppearanceGradient& g, const Selection& sel, TransportBasis basis) {
  const int block = block_size(sel, basis);
  Eigen::VectorXd out(block * g.visibility.size());
  for (Eigen::Index k = 0; k < g.visibility.size(); ++k) {
    Eigen::Index i = k * block;
    if (sel.albedo) { out.segment<3>(i) = g.albedo.col(k); i += 3; }
    if (sel.transport) { out.segment(i, transport_rows(basis)) = g.transport.col(k); i += transport_rows(basis); }
    if (sel.visibility) out(i++) = g.visibility(k);
    if (sel.roughness) out(i++) = g.roughness(k);
    if (sel.normal_offset) out.segment<3>(i) = g.normal_offset.col(k);
  }
  return out;
}

void unpack(const Eigen::VectorXd& v, const Selection& sel, TransportBasis basis, Scene& scene) {
  const int block = block_size(sel, basis);
  for (std::size_t k = 0; k < scene.primitives.size(); ++k) {
    GaussianPrimitive& p = scene.primitives[k];
    Eigen::Index i = static_cast<Eigen::Index>(k) * block;
    if (sel.albedo) { p.albedo = v.segment<3>(i); i += 3; }
    if (sel.transport) {
      if (basis == TransportBasis::kZh) {
        p.transport.values = v.segment(i, ZhLobes<double>::kSize);
      } else {
        scene.sh_transport[k].values = v.segment(i, ShTransport<double>::kSize);
      }
      i += transport_rows(basis);
    }
    if (sel.visibility) p.specular_visibility = std::clamp(v(i++), 0.0, 1.0);
    if (sel.roughness) p.roughness = std::clamp(v(i++), 1e-3, kMaxRoughness);
    if (sel.normal_offset) p.normal_offset = v.segment<3>(i);
  }
}

std::vector<std::size_t> draw_batch(std::size_t count, int batch, std::uint64_t seed, int step) {
  std::vector<std::size_t> all(count);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (batch <= 0 || static_cast<std::size_t>(batch) >= count) return all;
  std::mt19937_64 rng(stream_seed(seed, static_cast<std::uint64_t>(step)));
  for (std::size_t i = 0; i < static_cast<std::size_t>(batch); ++i) {
    const auto j = i + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(count - i));
    std::swap(all[i], all[std::min(j, count - 1)]);
  }
  all.resize(static_cast<std::size_t>(batch));
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

namespace {

void accumulate(LossBreakdown& sum, const LossBreakdown& l, double w) {
  sum.rec += w * l.rec;
  sum.scale += w * l.scale;
  sum.offset += w * l.offset;
  sum.mask += w * l.mask;
  sum.normal += w * l.normal;
  sum.normal_orient += w * l.normal_orient;
  sum.alpha_sparsity += w * l.alpha_sparsity;
  sum.bound += w * l.bound;
  sum.albedo += w * l.albedo;
  sum.neg_color += w * l.neg_color;
  sum.total += w * l.total;
}

}  // namespace

FitResult fit_appearance(const Scene& initial, std::span<const FitData> train,
                         std::span<const FitData> heldout, const FitOptions& options) {
  const TransportBasis basis = options.config.diffuse_basis;
  if (train.empty()) fail(ErrorCode::kInvalidArgument, "no training data");
  if (basis == TransportBasis::kSh && initial.sh_transport.size() != initial.primitives.size()) {
    fail(ErrorCode::kInvalidArgument, "SH fit needs an initial SH transport per primitive");
  }
  const std::vector<ParamClass> classes = fitted_classes(options);
  const Selection sel = select(classes);
  FitResult out;
  out.scene = initial;
  Eigen::VectorXd params = pack(out.scene, sel, basis);
  Adam adam(params.size(), options.adam);
  const double w = 1.0 / static_cast<double>(train.size());
  for (int step = 0; step < options.steps; ++step) {
    LossBreakdown loss;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.size());
    for (std::size_t d = 0; d < train.size(); ++d) {
      const std::uint64_t seed = d == 0 ? options.seed : stream_seed(options.seed, d);
      const std::vector<std::size_t> batch = draw_batch(train[d].lightings.size(), options.batch, seed, step);
      const Evaluation ev = evaluate_appearance(out.scene, train[d], batch, options.config, options.weights,
                                                options.bounds, step, classes);
      if (train.size() == 1) {
        loss = ev.loss;
        grad = pack(ev.grad, sel, basis);
      } else {
        accumulate(loss, ev.loss, w);
        grad += w * pack(ev.grad, sel, basis);
      }
    }
    out.trace.push_back({step, loss});
    adam.step(params, grad);
    unpack(params, sel, basis, out.scene);
    params = pack(out.scene, sel, basis);  // clamped values
  }
  out.train = evaluate_metrics(out.scene, train, options.config);
  if (!heldout.empty()) out.heldout = evaluate_metrics(out.scene, heldout, options.config);
  return out;
}

FitResult fit_appearance(const Scene& initial, const FitData& train, const FitData* heldout,
                         const FitOptions& options) {
  return fit_appearance(initial, std::span(&train, 1),
                        heldout ? std::span(heldout, 1) : std::span<const FitData>{}, options);
}

FitMetrics evaluate_metrics(const Scene& scene, const FitData& data, const ShadingConfig& config) {
  return evaluate_metrics(scene, std::span(&data, 1), config);
}

FitMetrics evaluate_metrics(const Scene& scene, std::span<const FitData> sets, const ShadingConfig& config) {
  std::vector<double> sq, ssim;
  std::vector<Eigen::Index> counts;
  for (const FitData& data : sets) {
    const std::size_t obs = data.observation_count();
    if (data.targets.size() != obs) fail(ErrorCode::kInvalidArgument, "fit data has no targets");
    const std::size_t first = sq.size();
    sq.resize(first + obs, 0.0);
    ssim.resize(first + obs, 0.0);
    counts.resize(first + obs, 0);
    parallel_for(obs, [&](std::size_t o) {
      const std::size_t l = o / data.views.size(), v = o % data.views.size();
      const Image3 img = render(scene, data.prepared, data.views[v], data.lightings[l], config, data.shadows[l]).color;
      const Image1& mask = data.masks[v];
      for (Eigen::Index p = 0; p < mask.size(); ++p) {
        if (!foreground(mask, p)) continue;
        sq[first + o] += (img.data().col(p) - data.targets[o].data().col(p)).squaredNorm();
        counts[first + o] += 3;
      }
      ssim[first + o] = metric_ssim(img, data.targets[o], mask);
    });
  }
  double total = 0.0;
  Eigen::Index n = 0;
  for (std::size_t o = 0; o < sq.size(); ++o) {
    total += sq[o];
    n += counts[o];
  }
  FitMetrics m;
  m.psnr = total == 0.0 ? std::numeric_limits<double>::infinity()
                        : 10.0 * std::log10(static_cast<double>(n) / total);
  m.ssim = sq.empty() ? 0.0 : std::accumulate(ssim.begin(), ssim.end(), 0.0) / static_cast<double>(sq.size());
  return m;
}

}  // namespace prt
