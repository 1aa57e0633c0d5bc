#include "prt/fit.hpp"
#include "prt/synthetic.hpp"
#include "prt/validation.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "gtest/gtest.h"

namespace prt {
namespace {

Image3 random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image3 img(w, h);
  for (Eigen::Index i = 0; i < img.data().size(); ++i) img.data().data()[i] = uniform01(rng);
  return img;
}

TEST(Losses, Reconstruction) {
  const Image3 a = random_image(8, 6, 1), b = random_image(8, 6, 2);
  const Image1 all(8, 6, 1.0);
  EXPECT_EQ(loss_rec(a, a, all), 0.0);
  Image3 shifted = a;
  shifted.data().array() += 0.125;
  EXPECT_NEAR(loss_rec(shifted, a, all), 0.125, 1e-15);
  Image1 half(8, 6);
  double sum = 0.0;
  int n = 0;
  for (Eigen::Index p = 0; p < 48; p += 2) {
    half.data()(0, p) = 1.0;
    sum += (a.data().col(p) - b.data().col(p)).cwiseAbs().sum();
    n += 3;
  }
  EXPECT_NEAR(loss_rec(a, b, half), sum / n, 1e-7);
}

TEST(Losses, Bound) {
  const Bounds b;
  EXPECT_DOUBLE_EQ(bound_penalty(0.0, b.scale), 1e7);
  EXPECT_NEAR(bound_penalty(0.02, b.scale), 1e-4, 1e-18);
  EXPECT_EQ(bound_penalty(0.005, b.scale), 0.0);
  EXPECT_EQ(bound_penalty(0.1, b.roughness), 0.0);
  const std::vector<double> v{0.0, 0.02, 0.005};
  EXPECT_NEAR(loss_bound(v, b.scale), (1e7 + 1e-4) / 3.0, 1e-6);
}

TEST(Losses, NormalOrientation) {
  const Image1 all(4, 4, 1.0);
  Image3 n(4, 4), d(4, 4);
  n.data().row(2).setOnes();
  d.data().row(0).setOnes();
  EXPECT_EQ(loss_normal_orient(n, d, all), 0.0);
  d.data().row(0).setConstant(std::sqrt(0.75));
  d.data().row(2).setConstant(0.5);
  EXPECT_NEAR(loss_normal_orient(n, d, all), 0.25, 1e-15);
  d.data().row(2).setConstant(-0.5);
  EXPECT_EQ(loss_normal_orient(n, d, all), 0.0);

  Image3 rn = random_image(5, 5, 3), rd = random_image(5, 5, 4);
  rn.data().array() -= 0.5;
  rd.data().array() -= 0.5;
  double sum = 0.0;
  for (Eigen::Index p = 0; p < 25; ++p) sum += std::pow(std::max(0.0, rn.data().col(p).dot(rd.data().col(p))), 2);
  EXPECT_NEAR(loss_normal_orient(rn, rd, Image1(5, 5, 1.0)), sum / 25, 1e-7);
}

TEST(Losses, AuxTermsAndRecomposition) {
  std::vector<GaussianPrimitive> prims(4);
  AuxInputs in;
  in.primitives = prims;
  const LossWeights w;
  LossBreakdown zero = loss_aux(in, w, Bounds{}, 0);
  EXPECT_EQ(zero.offset, 0.0);
  EXPECT_EQ(zero.normal, 0.0);
  EXPECT_EQ(zero.neg_color, 0.0);

  prims[2].albedo(1) = -0.1;
  prims[1].offset = Eigen::Vector3d(0.1, 0.2, 0.0);
  prims[3].normal_offset = Eigen::Vector3d(0.0, 0.3, 0.1);
  prims[0].roughness = 0.5;
  in.alphas.push_back(Image1(6, 6, 0.3));
  Image1 mask(6, 6);
  mask.data().head(18).setOnes();
  in.masks.push_back(mask);
  Image3 normals(6, 6), dirs(6, 6);
  normals.data().row(2).setOnes();
  dirs.data().row(2).setConstant(0.6);
  dirs.data().row(0).setConstant(0.8);
  in.normals.push_back(normals);
  in.view_dirs.push_back(dirs);
  in.diffuse = Eigen::Matrix3Xd::Constant(3, 4, 0.2);
  in.diffuse(0, 1) = -0.3;
  const LossBreakdown b = loss_aux(in, w, Bounds{}, 5000);
  EXPECT_NEAR(b.neg_color, 0.01 / 12.0, 1e-15);
  EXPECT_NEAR(b.offset, 0.05 / 4.0, 1e-15);
  EXPECT_NEAR(b.normal, 0.1 / 4.0, 1e-15);
  EXPECT_NEAR(b.albedo, 0.09 / 12.0, 1e-15);
  EXPECT_NEAR(b.normal_orient, 0.36 * 18 / 18, 1e-12);
  EXPECT_NEAR(b.alpha_sparsity, 0.3, 1e-12);
  EXPECT_NEAR(b.bound, 0.25 * 0.25 / 4.0, 1e-12);
  for (double term : {b.rec, b.scale, b.offset, b.mask, b.normal, b.normal_orient, b.alpha_sparsity, b.bound,
                      b.albedo, b.neg_color}) {
    EXPECT_GE(term, 0.0);
  }
  const double manual = b.scale + 0.05 * b.offset + 0.1 * b.mask + 0.75 * b.normal + 0.1 * b.normal_orient +
                        0.1 * b.alpha_sparsity + 0.01 * b.bound + 0.01 * b.albedo + 0.01 * b.neg_color;
  EXPECT_NEAR(b.total, manual, 1e-9);
}

TEST(Losses, MaskExcludesBoundary) {
  Image1 mask(8, 8);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 4; ++x) mask.pixel(x, y)(0) = 1.0;
  }
  const Image1 edge = mask_boundary(mask);
  EXPECT_EQ(edge.pixel(3, 2)(0), 1.0);
  EXPECT_EQ(edge.pixel(4, 2)(0), 1.0);
  EXPECT_EQ(edge.pixel(2, 2)(0), 0.0);
  EXPECT_EQ(edge.pixel(5, 2)(0), 0.0);
}

TEST(Losses, NormalAnnealing) {
  const LossWeights w;
  EXPECT_EQ(w.normal_at(0), 1.0);
  EXPECT_DOUBLE_EQ(w.normal_at(5000), 0.75);
  EXPECT_DOUBLE_EQ(w.normal_at(10000), 0.5);
  EXPECT_EQ(w.normal_at(20000), 0.0);
  EXPECT_EQ(w.normal_at(50000), 0.0);
}

TEST(Metrics, PsnrAndSsim) {
  const Image3 a = random_image(16, 16, 5);
  const Image1 all(16, 16, 1.0);
  EXPECT_TRUE(std::isinf(metric_psnr(a, a, all)));
  EXPECT_NEAR(metric_ssim(a, a, all), 1.0, 1e-12);
  Image3 b = a;
  b.data().array() += 0.1;
  EXPECT_NEAR(metric_psnr(b, a, all), 20.0, 1e-9);
  Image3 check(16, 16), inverse(16, 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      const double v = (x + y) % 2 ? 1.0 : 0.0;
      check.pixel(x, y).setConstant(v);
      inverse.pixel(x, y).setConstant(1.0 - v);
    }
  }
  EXPECT_LT(metric_ssim(check, inverse, all), 0.1);
}

TEST(Adam, FirstStepAndConvergence) {
  Adam adam(2, AdamConfig{});
  Eigen::VectorXd x(2);
  x << 1.0, -2.0;
  adam.step(x, Eigen::Vector2d(3.0, -0.5));
  EXPECT_NEAR(x(0), 1.0 - 1e-2, 1e-9);
  EXPECT_NEAR(x(1), -2.0 + 1e-2, 1e-9);
  for (int i = 0; i < 3000; ++i) adam.step(x, 2.0 * (x - Eigen::Vector2d(0.3, 0.4)));
  EXPECT_LT((x - Eigen::Vector2d(0.3, 0.4)).norm(), 1e-2);
  EXPECT_THROW(adam.step(x, Eigen::Vector3d::Zero()), Error);
}

const std::vector<ParamClass> kAppearance{ParamClass::kAlbedo, ParamClass::kTransport, ParamClass::kVisibility,
                                          ParamClass::kRoughness, ParamClass::kNormalOffset};

void expect_gradients_match(const ShadingConfig& config) {
  const Check c = prt::check_gradients(config);
  ::testing::Test::RecordProperty("worst_relative_error", std::to_string(c.measured));
  EXPECT_TRUE(c.passed) << c.detail << " error " << c.measured;
}

TEST(Gradients, DeferredZonalMatchesFiniteDifferences) { expect_gradients_match(ShadingConfig{}); }

TEST(Gradients, ForwardMatchesFiniteDifferences) {
  ShadingConfig config;
  config.deferred = false;
  expect_gradients_match(config);
}

TEST(Gradients, ShTransportMatchesFiniteDifferences) {
  ShadingConfig config;
  config.diffuse_basis = TransportBasis::kSh;
  expect_gradients_match(config);
}

TEST(Gradients, ZeroResidualAndFrozenGeometry) {
  const SplatCluster c = splat_cluster(4, 3);
  FitData data = cluster_fit_data(c, 24, 5);
  render_targets(c.scene, data, ShadingConfig{});
  const AppearanceGradient g =
      grad_appearance(c.scene, data, ShadingConfig{}, LossWeights::none(), Bounds{}, 0, kAppearance);
  EXPECT_TRUE(g.albedo.isZero(0.0));
  EXPECT_TRUE(g.transport.isZero(0.0));
  EXPECT_TRUE(g.visibility.isZero(0.0));
  EXPECT_TRUE(g.roughness.isZero(0.0));
  EXPECT_TRUE(g.normal_offset.isZero(0.0));
  for (ParamClass frozen : {ParamClass::kOffset, ParamClass::kRotation, ParamClass::kScale, ParamClass::kOpacity}) {
    const std::vector<ParamClass> req{frozen};
    try {
      grad_appearance(c.scene, data, ShadingConfig{}, LossWeights{}, Bounds{}, 0, req);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kContractViolation);
    }
  }
}

TEST(Gradients, AlbedoClosedForm) {
  // One primitive, one light, no specular: dL/drho_c = u_c * sum_p w_p s_p sign_pc / (3 N).
  SplatCluster c = splat_cluster(1, 9);
  c.scene.primitives[0].specular_visibility = 0.0;
  FitData data = cluster_fit_data(c, 24, 13);
  data.lightings.resize(1);
  data.shadows.resize(1);
  data.targets.resize(1);
  const std::vector<ParamClass> req{ParamClass::kAlbedo};
  const AppearanceGradient g = grad_appearance(c.scene, data, ShadingConfig{}, LossWeights::none(), Bounds{}, 0, req);
  const RenderResult rr = render(c.scene, data.prepared, data.views[0], data.lightings[0], ShadingConfig{}, data.shadows[0]);
  const Eigen::Vector3d u = primitive_diffuse(c.scene, data.prepared, data.lightings[0].sh, TransportBasis::kZh)
                                .col(0)
                                .cwiseQuotient(c.scene.primitives[0].albedo);
  const Coverage& cov = data.views[0].coverage;
  Eigen::Vector3d expected = Eigen::Vector3d::Zero();
  double n = 0;
  for (Eigen::Index p = 0; p < data.masks[0].size(); ++p) {
    if (!(data.masks[0].data()(0, p) > 0.5)) continue;
    n += 1;
    for (std::int64_t e = cov.begin(p); e < cov.end(p); ++e) {
      const Eigen::Vector3d r = rr.color.data().col(p) - data.targets[0].data().col(p);
      for (int ch = 0; ch < 3; ++ch) {
        const double sign = r(ch) > 0 ? 1.0 : (r(ch) < 0 ? -1.0 : 0.0);
        expected(ch) += cov.weights[static_cast<std::size_t>(e)] * rr.gbuffer.shadow.data()(0, p) * sign;
      }
    }
  }
  expected = expected.cwiseProduct(u) / (3.0 * n);
  EXPECT_LT((g.albedo.col(0) - expected).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Fit, GroundTruthIsFixedPoint) {
  const SplatCluster c = splat_cluster(4, 21);
  FitData data = cluster_fit_data(c, 24, 17);
  render_targets(c.scene, data, ShadingConfig{});
  FitOptions opt;
  opt.steps = 20;
  opt.weights = LossWeights::none();
  const FitResult r = fit_appearance(c.scene, data, nullptr, opt);
  for (const TraceRow& row : r.trace) EXPECT_LT(std::abs(row.loss.total - r.trace[0].loss.total), 1e-6);
  EXPECT_TRUE(std::isinf(r.train.psnr));
}

TEST(Fit, DescendsAndIsDeterministic) {
  const SplatCluster truth = splat_cluster(4, 31);
  FitData data = cluster_fit_data(truth, 24, 19);
  render_targets(truth.scene, data, ShadingConfig{});
  Scene init = truth.scene;
  init_appearance(init, truth.prepared, TransportBasis::kZh);
  FitOptions opt;
  opt.steps = 60;
  opt.batch = 2;
  opt.seed = 4;
  set_worker_threads(1);
  const FitResult a = fit_appearance(init, data, nullptr, opt);
  set_worker_threads(4);
  const FitResult b = fit_appearance(init, data, nullptr, opt);
  set_worker_threads(0);
  EXPECT_LT(a.trace.back().loss.rec, a.trace.front().loss.rec);
  ASSERT_EQ(a.scene.primitives.size(), b.scene.primitives.size());
  for (std::size_t k = 0; k < a.scene.primitives.size(); ++k) EXPECT_TRUE(a.scene.primitives[k] == b.scene.primitives[k]);
  for (std::size_t i = 0; i < a.trace.size(); ++i) EXPECT_EQ(a.trace[i].loss.total, b.trace[i].loss.total);
}

TEST(Fit, InitialAppearance) {
  const SplatCluster c = splat_cluster(3, 1);
  Scene s = c.scene;
  init_appearance(s, c.prepared, TransportBasis::kSh);
  ASSERT_EQ(s.sh_transport.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(s.primitives[k].albedo, Eigen::Vector3d::Constant(0.5));
    EXPECT_EQ(s.primitives[k].specular_visibility, 0.1);
    EXPECT_EQ(s.primitives[k].roughness, 0.1);
    // Band-0-only transport: a constant light of radiance 1 returns the albedo.
    ShVector<double> light(kMaxShOrder, 3);
    light.coeffs.row(0).setConstant(std::sqrt(4 * M_PI));
    ShVector<double> d(kMaxShOrder, 3);
    d.coeffs = expand_sh_transport(s.sh_transport[k]);
    EXPECT_LT((diffuse_radiance(s.primitives[k].albedo, d, light) - Eigen::Vector3d::Constant(0.5)).norm(), 1e-12);
  }
}

TEST(Synthetic, ClampedCosineCoefficients) {
  const Eigen::VectorXd z = clamped_cosine_zh();
  EXPECT_NEAR(z(0), 1.0, 1e-14);
  EXPECT_NEAR(z(1), 2.0 / 3.0, 1e-14);
  EXPECT_NEAR(z(2), 0.25, 1e-14);
  EXPECT_NEAR(z(3), 0.0, 1e-14);
  EXPECT_NEAR(z(4), -1.0 / 24.0, 1e-14);
  EXPECT_NEAR(z(6), 1.0 / 64.0, 1e-14);
}

}  // namespace
}  // namespace prt
