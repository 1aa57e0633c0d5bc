#include "prt/validation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Geometry>

#include "prt/fit.hpp"
#include "prt/harmonics_oracle.hpp"
#include "prt/irradiance.hpp"
#include "prt/synthetic.hpp"

namespace prt {

Check make_check(std::string name, double measured, double threshold, bool inclusive, std::string detail) {
  Check c;
  c.name = std::move(name);
  c.measured = measured;
  c.threshold = threshold;
  c.inclusive = inclusive;
  c.passed = inclusive ? measured <= threshold : measured < threshold;
  c.detail = std::move(detail);
  return c;
}

Check rescaled(const Check& check, double factor) {
  return make_check(check.name, check.measured, check.threshold * factor, check.inclusive, check.detail);
}

bool SuiteReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

std::vector<Check> check_param_counts() {
  return {make_check("texel_params_sh", std::abs(texel_param_count(TransportBasis::kSh) - 113), 0, true,
                     std::to_string(texel_param_count(TransportBasis::kSh))),
          make_check("texel_params_zh", std::abs(texel_param_count(TransportBasis::kZh) - 51), 0, true,
                     std::to_string(texel_param_count(TransportBasis::kZh)))};
}

Check check_sh_orthonormality(int samples) {
  const Eigen::Matrix3Xd dirs = stratified_sphere_directions(samples, 7);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(sh_count(kMaxShOrder), sh_count(kMaxShOrder));
  Eigen::MatrixXd block(sh_count(kMaxShOrder), 4096);
  for (Eigen::Index first = 0; first < dirs.cols(); first += block.cols()) {
    const Eigen::Index n = std::min<Eigen::Index>(block.cols(), dirs.cols() - first);
    for (Eigen::Index s = 0; s < n; ++s) {
      sh_eval_basis_unchecked<double>(dirs(0, first + s), dirs(1, first + s), dirs(2, first + s), kMaxShOrder,
                                      block.col(s).data());
    }
    gram.noalias() += block.leftCols(n) * block.leftCols(n).transpose();
  }
  gram *= 4.0 * M_PI / static_cast<double>(samples);
  const double err = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
  return make_check("sh_orthonormality", err, 10.0 / std::sqrt(static_cast<double>(samples)), false,
                    std::to_string(samples) + " stratified samples");
}

Check check_zh_rotation(int sets, int rotations, int samples, std::uint64_t seed) {
  constexpr int kBands = kMaxShOrder + 1;
  const SphereQuadrature q = gauss_sphere_quadrature(samples);
  std::vector<Eigen::Vector3d> axes(static_cast<std::size_t>(rotations));
  for (int r = 0; r < rotations; ++r) axes[static_cast<std::size_t>(r)] = random_rotation(stream_seed(seed, r)).col(2);

  // A_r(i, l) = sum_s w_s Y_i(w_s) Y_l0(R_r^-1 w_s), where (R^-1 w)_z = R e_z . w.
  std::vector<Eigen::MatrixXd> moments(axes.size(), Eigen::MatrixXd::Zero(sh_count(kMaxShOrder), kBands));
  const Eigen::Index block = 4096;
  Eigen::VectorXd norm(kBands);
  for (int l = 0; l < kBands; ++l) norm(l) = std::sqrt((2.0 * l + 1.0) / (4.0 * M_PI));
  Eigen::MatrixXd basis(sh_count(kMaxShOrder), block), legendre(block, kBands);
  for (Eigen::Index first = 0; first < q.directions.cols(); first += block) {
    const Eigen::Index n = std::min(block, q.directions.cols() - first);
    for (Eigen::Index s = 0; s < n; ++s) {
      const auto d = q.directions.col(first + s);
      sh_eval_basis_unchecked<double>(d.x(), d.y(), d.z(), kMaxShOrder, basis.col(s).data());
      basis.col(s) *= q.weights(first + s);
    }
    for (std::size_t r = 0; r < axes.size(); ++r) {
      for (Eigen::Index s = 0; s < n; ++s) {
        const double x = axes[r].dot(q.directions.col(first + s));
        double p0 = 1.0, p1 = x;
        legendre(s, 0) = norm(0);
        legendre(s, 1) = norm(1) * x;
        for (int l = 2; l < kBands; ++l) {
          const double p2 = ((2 * l - 1) * x * p1 - (l - 1) * p0) / l;
          legendre(s, l) = norm(l) * p2;
          p0 = p1;
          p1 = p2;
        }
      }
      moments[r].noalias() += basis.leftCols(n) * legendre.topRows(n);
    }
  }

  std::mt19937_64 rng(stream_seed(seed, static_cast<std::uint64_t>(rotations) + 1));
  double worst = 0.0;
  for (int set = 0; set < sets; ++set) {
    const int order = static_cast<int>(rng() % kBands);
    Eigen::VectorXd zhat = Eigen::VectorXd::Zero(kBands);
    for (int l = 0; l <= order; ++l) zhat(l) = 2.0 * uniform01(rng) - 1.0;
    Eigen::VectorXd scaled = zhat;
    for (int l = 0; l < kBands; ++l) scaled(l) *= std::sqrt(4.0 * M_PI / (2.0 * l + 1.0));
    for (std::size_t r = 0; r < axes.size(); ++r) {
      const Eigen::VectorXd rotated = moments[r] * zhat;
      const ShVector<double> expanded = zh_expand(scaled, axes[r]);
      worst = std::max(worst, (rotated - expanded.coeffs.col(0)).cwiseAbs().maxCoeff());
    }
  }
  std::ostringstream detail;
  detail << sets << " sets x " << rotations << " rotations, " << q.directions.cols() << " quadrature nodes";
  return make_check("zh_rotation", worst, 1e-3, false, detail.str());
}

std::vector<Splat2D> random_splats(std::mt19937_64& rng, int count, int size) {
  std::uniform_real_distribution<double> pos(-4.0, size + 4.0), var(0.5, 60.0), ang(0, M_PI), depth(0.5, 5.0);
  std::vector<Splat2D> out;
  for (int k = 0; k < count; ++k) {
    Splat2D s;
    s.mean = Eigen::Vector2d(pos(rng), pos(rng));
    const Eigen::Matrix2d rot = Eigen::Rotation2Dd(ang(rng)).toRotationMatrix();
    s.cov = rot * Eigen::Vector2d(var(rng), var(rng)).asDiagonal() * rot.transpose();
    s.conic = s.cov.inverse();
    s.depth = depth(rng);
    s.index = k;
    const double mid = 0.5 * s.cov.trace();
    s.radius = 3.0 * std::sqrt(mid + std::sqrt(mid * mid - s.cov.determinant()));
    out.push_back(s);
  }
  std::sort(out.begin(), out.end(), [](const Splat2D& a, const Splat2D& b) { return a.depth < b.depth; });
  return out;
}

Check check_compositing(int scenes, int max_splats, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int scene = 0; scene < scenes; ++scene) {
    const int count = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_splats));
    const auto splats = random_splats(rng, count, size);
    const Eigen::Matrix3Xd colors = Eigen::Matrix3Xd::NullaryExpr(3, count, [&]() { return unit(rng); });
    std::vector<double> opacity(static_cast<std::size_t>(count));
    for (double& o : opacity) o = unit(rng);
    const Image3 tiled = composite<3>(splats, colors, opacity, size, size);
    const Eigen::MatrixXd brute = composite_bruteforce(splats, colors, opacity, size, size);
    worst = std::max(worst, (tiled.data() - brute).cwiseAbs().maxCoeff());
  }
  std::ostringstream detail;
  detail << scenes << " scenes of <= " << max_splats << " splats at " << size << "x" << size;
  return make_check("compositing", worst, 1e-6, false, detail.str());
}

Check check_parseval(int pairs, int samples, std::uint64_t seed) {
  const int n = sh_count(kMaxShOrder);
  std::mt19937_64 rng(seed);
  // Columns hold (pair, channel); band 0 is lifted so products stay away from 0.
  Eigen::MatrixXd light(n, 3 * pairs), transport(n, 3 * pairs);
  for (Eigen::MatrixXd* m : {&light, &transport}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = 2.0 * uniform01(rng) - 1.0;
    m->row(0).array() += 3.0;
  }
  const Eigen::Matrix3Xd dirs = stratified_sphere_directions(samples, stream_seed(seed, 1));
  Eigen::VectorXd mc = Eigen::VectorXd::Zero(3 * pairs);
  const Eigen::Index block = 4096;
  Eigen::MatrixXd basis(n, block);
  for (Eigen::Index first = 0; first < dirs.cols(); first += block) {
    const Eigen::Index m = std::min(block, dirs.cols() - first);
    for (Eigen::Index s = 0; s < m; ++s) {
      sh_eval_basis_unchecked<double>(dirs(0, first + s), dirs(1, first + s), dirs(2, first + s), kMaxShOrder,
                                      basis.col(s).data());
    }
    const Eigen::MatrixXd fl = light.transpose() * basis.leftCols(m);
    const Eigen::MatrixXd fd = transport.transpose() * basis.leftCols(m);
    mc += fl.cwiseProduct(fd).rowwise().sum();
  }
  mc *= 4.0 * M_PI / static_cast<double>(samples);
  double worst = 0.0;
  for (int p = 0; p < pairs; ++p) {
    ShVector<double> l(kMaxShOrder, 3), d(kMaxShOrder, 3);
    l.coeffs = light.middleCols(3 * p, 3);
    d.coeffs = transport.middleCols(3 * p, 3);
    const Eigen::Vector3d dot = diffuse_radiance(Eigen::Vector3d::Ones(), d, l);
    const Eigen::Vector3d ref = mc.segment(3 * p, 3);
    worst = std::max(worst, ((dot - ref).array() / ref.array()).abs().maxCoeff());
  }
  return make_check("diffuse_parseval", worst, 0.01, false,
                    std::to_string(pairs) + " pairs, " + std::to_string(samples) + " samples");
}

Check check_bvh(int triangles, int rays, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::Matrix3Xd v(3, 3 * triangles);
  Eigen::Matrix3Xi t(3, triangles);
  for (int k = 0; k < triangles; ++k) {
    const Eigen::Vector3d c(2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0);
    for (int i = 0; i < 3; ++i) {
      v.col(3 * k + i) = c + 0.1 * Eigen::Vector3d(g(rng), g(rng), g(rng));
      t(i, k) = 3 * k + i;
    }
  }
  const Bvh bvh(v, t);
  int mismatches = 0;
  for (int r = 0; r < rays; ++r) {
    const Eigen::Vector3d o(1.5 * g(rng), 1.5 * g(rng), 1.5 * g(rng));
    const Eigen::Vector3d d = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
    const double t_max = r % 2 == 0 ? std::numeric_limits<double>::infinity() : 3.0 * uniform01(rng);
    if (bvh.occluded(o, d, 1e-9, t_max) != occluded_exhaustive(v, t, o, d, 1e-9, t_max)) ++mismatches;
  }
  return make_check("bvh_any_hit", mismatches, 0, true,
                    std::to_string(rays) + " rays against " + std::to_string(triangles) + " triangles");
}

namespace {

void square(double h, double height, Eigen::Matrix3Xd& v, Eigen::Matrix3Xi& t) {
  v.resize(3, 4);
  v << -h, h, h, -h, -h, -h, h, h, height, height, height, height;
  t.resize(3, 2);
  t << 0, 0, 1, 2, 2, 3;
}

}  // namespace

std::vector<Check> check_irradiance(int seeds) {
  std::vector<Check> out;
  const Bvh empty(Eigen::Matrix3Xd(3, 0), Eigen::Matrix3Xi(3, 0));
  LightRig weighted = make_dome_rig(1024);
  for (std::size_t j = 0; j < weighted.size(); ++j) weighted.lights[j].intensity *= 0.1 + 0.03 * static_cast<double>(j % 7);
  double worst = 0.0;
  for (int n : {kFullEnumeration, 1, 16}) {
    for (std::uint64_t s = 0; s < 4; ++s) {
      const double e = normalized_irradiance(Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitZ(), weighted, empty, n, s);
      worst = std::max(worst, std::abs(e - 1.0));
    }
  }
  out.push_back(make_check("irradiance_unoccluded_exact", worst, 0.0, true, "|E - 1| over spp {all, 1, 16}"));

  Eigen::Matrix3Xd v;
  Eigen::Matrix3Xi t;
  square(100.0, 0.0, v, t);
  const double half = normalized_irradiance(Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitZ(), make_dome_rig(1024),
                                            Bvh(v, t), kFullEnumeration, 0);
  out.push_back(make_check("irradiance_half_occlusion", std::abs(half - 0.5), 1e-12, false,
                           "full enumeration, 1024-light dome"));

  square(0.3, 0.5, v, t);
  const Bvh blocker(v, t);
  LightRig rig = make_dome_rig(1024);
  for (std::size_t j = 0; j < rig.size(); ++j) rig.lights[j].intensity *= 1.0 + static_cast<double>(j % 5);
  const Eigen::Vector3d p(0.1, 0.0, 0.0), n = Eigen::Vector3d::UnitZ();
  const double exact = normalized_irradiance(p, n, rig, blocker, kFullEnumeration, 0);
  double sum = 0.0;
  for (int s = 0; s < seeds; ++s) sum += normalized_irradiance(p, n, rig, blocker, 1, static_cast<std::uint64_t>(s));
  const double mean = sum / seeds;
  const double se = std::sqrt(exact * (1.0 - exact) / seeds);
  std::ostringstream detail;
  detail << "mean " << mean << " vs " << exact << " over " << seeds << " seeds (standard errors)";
  out.push_back(make_check("irradiance_1spp_unbiased", std::abs(mean - exact) / se, 3.0, false, detail.str()));
  return out;
}

Check check_gradients(const ShadingConfig& config, double h) {
  SplatCluster c = splat_cluster(4, 7);
  c.scene.primitives[1].albedo(2) = -0.05;
  c.scene.primitives[2].roughness = 0.3;  // above the roughness bound
  const FitData data = cluster_fit_data(c, 32, 11, config);
  const LossWeights w;
  const std::vector<ParamClass> classes{ParamClass::kAlbedo, ParamClass::kTransport, ParamClass::kVisibility,
                                        ParamClass::kRoughness, ParamClass::kNormalOffset};
  const AppearanceGradient g = grad_appearance(c.scene, data, config, w, Bounds{}, 100, classes);
  std::vector<std::size_t> all(data.lightings.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  auto loss = [&](const Scene& s) { return evaluate_appearance(s, data, all, config, w, Bounds{}, 100, {}).loss.total; };

  double worst = 0.0;
  std::string worst_name;
  int probes = 0;
  auto probe = [&](const std::string& name, double analytic, auto&& set) {
    Scene plus = c.scene, minus = c.scene;
    set(plus, h);
    set(minus, -h);
    const double fd = (loss(plus) - loss(minus)) / (2 * h);
    const double rel = std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-7});
    ++probes;
    if (rel > worst || worst_name.empty()) {
      worst = rel;
      worst_name = name;
    }
  };
  const bool sh = config.diffuse_basis == TransportBasis::kSh;
  for (std::size_t k = 0; k < c.scene.primitives.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const std::string id = std::to_string(k);
    for (int ch = 0; ch < 3; ++ch) {
      probe("albedo " + id, g.albedo(ch, kk), [&](Scene& s, double d) { s.primitives[k].albedo(ch) += d; });
      probe("normal_offset " + id, g.normal_offset(ch, kk),
            [&](Scene& s, double d) { s.primitives[k].normal_offset(ch) += d; });
    }
    probe("visibility " + id, g.visibility(kk), [&](Scene& s, double d) { s.primitives[k].specular_visibility += d; });
    probe("roughness " + id, g.roughness(kk), [&](Scene& s, double d) { s.primitives[k].roughness += d; });
    for (Eigen::Index i = 0; i < g.transport.rows(); ++i) {
      probe("transport " + id + "/" + std::to_string(i), g.transport(i, kk), [&](Scene& s, double d) {
        if (sh) {
          s.sh_transport[k].values(i) += d;
        } else {
          s.primitives[k].transport.values(i) += d;
        }
      });
    }
  }
  std::string name = std::string("gradients_") + (sh ? "sh" : "zh") + (config.deferred ? "_deferred" : "_forward");
  return make_check(std::move(name), worst, 1e-3, false,
                    std::to_string(probes) + " parameters, worst at " + worst_name);
}

std::vector<std::string> suite_names() {
  return {"harmonics", "compositing", "parseval", "bvh", "irradiance", "gradients"};
}

std::vector<SuiteReport> run_suites(const std::string& name) {
  if (name == "all") {
    std::vector<SuiteReport> out;
    for (const std::string& s : suite_names()) out.push_back(run_suites(s).front());
    return out;
  }
  SuiteReport r;
  r.name = name;
  if (name == "harmonics") {
    r.checks = check_param_counts();
    r.checks.push_back(check_sh_orthonormality(1000000));
    r.checks.push_back(check_zh_rotation(100, 100, 1000000, 1));
  } else if (name == "compositing") {
    r.checks.push_back(check_compositing(50, 64, 128, 2));
  } else if (name == "parseval") {
    r.checks.push_back(check_parseval(20, 1000000, 3));
  } else if (name == "bvh") {
    r.checks.push_back(check_bvh(2000, 10000, 4));
  } else if (name == "irradiance") {
    r.checks = check_irradiance(10000);
  } else if (name == "gradients") {
    ShadingConfig forward, sh;
    forward.deferred = false;
    sh.diffuse_basis = TransportBasis::kSh;
    for (const ShadingConfig& c : {ShadingConfig{}, forward, sh}) r.checks.push_back(check_gradients(c));
  } else {
    fail(ErrorCode::kInvalidArgument, "unknown suite '" + name + "'");
  }
  return {r};
}

}  // namespace prt
