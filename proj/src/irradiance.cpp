#include "prt/irradiance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace prt {

bool intersect_triangle(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                        const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                        double t_min, double t_max, double* t_hit) {
  const Eigen::Vector3d e1 = b - a;
  const Eigen::Vector3d e2 = c - a;
  const Eigen::Vector3d p = dir.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-300) return false;
  const double inv = 1.0 / det;
  const Eigen::Vector3d s = origin - a;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return false;
  const Eigen::Vector3d q = s.cross(e1);
  const double v = dir.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return false;
  const double t = e2.dot(q) * inv;
  if (!(t > t_min && t < t_max)) return false;
  if (t_hit) *t_hit = t;
  return true;
}

Bvh::Bvh(const Eigen::Matrix3Xd& vertices, const Eigen::Matrix3Xi& triangles)
    : vertices_(vertices), triangles_(triangles) {
  const auto n = static_cast<int>(triangles.cols());
  if (vertices.cols() > 0) {
    const Eigen::Vector3d lo = vertices.rowwise().minCoeff();
    const Eigen::Vector3d hi = vertices.rowwise().maxCoeff();
    epsilon_ = 1e-4 * 0.5 * (hi - lo).norm();
  }
  if (n == 0) return;
  Eigen::Matrix3Xd centroids(3, n);
  for (int t = 0; t < n; ++t) {
    centroids.col(t) = (vertices.col(triangles(0, t)) + vertices.col(triangles(1, t)) +
                        vertices.col(triangles(2, t))) / 3.0;
  }
  order_.resize(static_cast<std::size_t>(n));
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(static_cast<std::size_t>(2 * n));
  build(0, n, centroids);
}

int Bvh::build(int first, int count, const Eigen::Matrix3Xd& centroids) {
  Node node;
  node.lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  node.hi = -node.lo;
  Eigen::Vector3d clo = node.lo, chi = node.hi;
  for (int i = first; i < first + count; ++i) {
    const int t = order_[static_cast<std::size_t>(i)];
    for (int k = 0; k < 3; ++k) {
      node.lo = node.lo.cwiseMin(vertices_.col(triangles_(k, t)));
      node.hi = node.hi.cwiseMax(vertices_.col(triangles_(k, t)));
    }
    clo = clo.cwiseMin(centroids.col(t));
    chi = chi.cwiseMax(centroids.col(t));
  }
  // Pad so hits on a box face are never lost to rounding in the slab test.
  const Eigen::Vector3d pad = 1e-9 * (node.hi - node.lo).cwiseAbs() + Eigen::Vector3d::Constant(1e-12);
  node.lo -= pad;
  node.hi += pad;
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  if (count <= kLeafSize) {
    nodes_[static_cast<std::size_t>(id)].first = first;
    nodes_[static_cast<std::size_t>(id)].count = count;
    return id;
  }
  int axis = 0;
  (chi - clo).maxCoeff(&axis);
  const int mid = first + count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                   [&](int a, int b) {
                     const double ca = centroids(axis, a), cb = centroids(axis, b);
                     return ca < cb || (ca == cb && a < b);
                   });
  const int left = build(first, mid - first, centroids);
  const int right = build(mid, first + count - mid, centroids);
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

bool Bvh::occluded(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double t_min,
                   double t_max) const {
  if (nodes_.empty()) return false;
  const Eigen::Vector3d inv = dir.cwiseInverse();
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[static_cast<std::size_t>(stack[--top])];
    double t0 = t_min, t1 = t_max;
    bool miss = false;
    for (int k = 0; k < 3 && !miss; ++k) {
      if (dir(k) == 0.0) {
        miss = origin(k) < node.lo(k) || origin(k) > node.hi(k);
        continue;
      }
      double ta = (node.lo(k) - origin(k)) * inv(k);
      double tb = (node.hi(k) - origin(k)) * inv(k);
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      miss = t0 > t1;
    }
    if (miss) continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const int t = order_[static_cast<std::size_t>(i)];
        if (intersect_triangle(origin, dir, vertices_.col(triangles_(0, t)), vertices_.col(triangles_(1, t)),
                               vertices_.col(triangles_(2, t)), t_min, t_max)) {
          return true;
        }
      }
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return false;
}

bool occluded_exhaustive(const Eigen::Matrix3Xd& vertices, const Eigen::Matrix3Xi& triangles,
                         const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double t_min,
                         double t_max) {
  for (Eigen::Index t = 0; t < triangles.cols(); ++t) {
    if (intersect_triangle(origin, dir, vertices.col(triangles(0, t)), vertices.col(triangles(1, t)),
                           vertices.col(triangles(2, t)), t_min, t_max)) {
      return true;
    }
  }
  return false;
}

int visibility(const Bvh& bvh, const Eigen::Vector3d& origin, const Eigen::Vector3d& normal,
               const Eigen::Vector3d& dir, double range) {
  const double eps = bvh.epsilon();
  return bvh.occluded(origin + eps * normal, dir, eps, range) ? 0 : 1;
}

IrradianceLights irradiance_lights(const LightRig& rig) {
  IrradianceLights out;
  const auto n = static_cast<Eigen::Index>(rig.active_count());
  out.points.resize(3, n);
  out.power.resize(n);
  Eigen::Index k = 0;
  for (std::size_t j = 0; j < rig.size(); ++j) {
    if (!rig.is_active(j)) continue;
    out.points.col(k) = rig.lights[j].position;
    out.power(k) = rig.lights[j].intensity.mean();
    ++k;
  }
  return out;
}

IrradianceLights irradiance_lights(const EnvironmentMap& env) {
  if (env.width() <= 0 || env.height() <= 0) {
    fail(ErrorCode::kMalformedInput, "environment map has no pixels");
  }
  const DirectionalLights d = directional_lights(env);
  IrradianceLights out;
  out.distant = true;
  out.points = d.directions;
  out.power = d.weights.colwise().mean().transpose();
  return out;
}

namespace {

double light_visibility(const Eigen::Vector3d& point, const Eigen::Vector3d& normal,
                        const IrradianceLights& lights, Eigen::Index j, const Bvh& bvh) {
  if (lights.distant) return visibility(bvh, point, normal, lights.points.col(j));
  const Eigen::Vector3d origin = point + bvh.epsilon() * normal;
  const Eigen::Vector3d to_light = lights.points.col(j) - origin;
  const double dist = to_light.norm();
  if (!(dist > 0.0)) return 1.0;
  return bvh.occluded(origin, to_light / dist, bvh.epsilon(), dist) ? 0.0 : 1.0;
}

}  // namespace

double normalized_irradiance(const Eigen::Vector3d& point, const Eigen::Vector3d& normal,
                             const IrradianceLights& lights, const Bvh& bvh, int samples,
                             std::uint64_t seed) {
  if (samples < 0) fail(ErrorCode::kInvalidArgument, "sample count must be >= 0");
  // Sequential sum so that full visibility divides to exactly 1.
  double total = 0.0;
  for (Eigen::Index j = 0; j < lights.power.size(); ++j) total += lights.power(j);
  if (!(total > 0.0)) {
    fail(ErrorCode::kUndefinedNormalization, "lights carry no power");
  }
  if ((lights.power.array() < 0.0).any()) {
    fail(ErrorCode::kInvalidArgument, "negative light power");
  }
  if (samples == kFullEnumeration) {
    double lit = 0.0;
    for (Eigen::Index j = 0; j < lights.power.size(); ++j) {
      lit += lights.power(j) == 0.0 ? 0.0 : lights.power(j) * light_visibility(point, normal, lights, j, bvh);
    }
    return lit / total;
  }
  // Importance sampling with pdf L_j / sum L reduces each term to Vis_j.
  std::vector<double> cdf(static_cast<std::size_t>(lights.power.size()));
  std::partial_sum(lights.power.data(), lights.power.data() + lights.power.size(), cdf.begin());
  std::mt19937_64 rng(mix_seed(seed));
  double hits = 0.0;
  for (int s = 0; s < samples; ++s) {
    const double u = uniform01(rng) * cdf.back();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) --it;
    hits += light_visibility(point, normal, lights, it - cdf.begin(), bvh);
  }
  return hits / samples;
}

double normalized_irradiance(const Eigen::Vector3d& point, const Eigen::Vector3d& normal,
                             const LightRig& rig, const Bvh& bvh, int samples, std::uint64_t seed) {
  return normalized_irradiance(point, normal, irradiance_lights(rig), bvh, samples, seed);
}

double env_map_irradiance(const Eigen::Vector3d& point, const Eigen::Vector3d& normal,
                          const EnvironmentMap& env, const Bvh& bvh, int samples, std::uint64_t seed) {
  return normalized_irradiance(point, normal, irradiance_lights(env), bvh, samples, seed);
}

IrradianceMap irradiance_uv_map(const ToyRig& rig, const Pose& pose, const IrradianceLights& lights,
                                int samples, std::uint64_t seed) {
  const BaseMesh posed = pose_mesh(rig.mesh, pose);
  const Bvh bvh(posed.vertices, posed.triangles);
  const std::vector<TexelFrame> frames = texel_frames(posed, rig.texels);
  IrradianceMap map;
  map.grid = rig.mesh.texel_grid;
  map.charts = rig.mesh.chart_count;
  map.samples = samples;
  map.seed = seed;
  map.values = Eigen::VectorXd::Zero(rig.mesh.texel_count());
  map.occupied.assign(static_cast<std::size_t>(rig.mesh.texel_count()), false);
  for (const TexelFrame& f : frames) map.occupied[static_cast<std::size_t>(f.texel_id)] = true;
  parallel_for(frames.size(), [&](std::size_t i) {
    const TexelFrame& f = frames[i];
    map.values(f.texel_id) = normalized_irradiance(
        f.position, f.tbn.col(2), lights, bvh, samples,
        stream_seed(seed, static_cast<std::uint64_t>(f.texel_id)));
  });
  return map;
}

IrradianceMap apply_shadow_operator(const IrradianceMap& map, const ShadowOperator& op) {
  if (op.kind == ShadowOperator::Kind::kIdentity) return map;
  if (op.radius < 1) fail(ErrorCode::kInvalidArgument, "blur radius must be >= 1");
  const int g = map.grid;
  const double sigma = 0.5 * op.radius;
  std::vector<double> w(static_cast<std::size_t>(2 * op.radius + 1));
  for (int i = -op.radius; i <= op.radius; ++i) {
    w[static_cast<std::size_t>(i + op.radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  }
  auto pass = [&](const Eigen::VectorXd& in, bool horizontal) {
    Eigen::VectorXd out = in;
    for (int chart = 0; chart < map.charts; ++chart) {
      for (int row = 0; row < g; ++row) {
        for (int col = 0; col < g; ++col) {
          const int id = chart * g * g + row * g + col;
          if (!map.occupied[static_cast<std::size_t>(id)]) continue;
          double acc = 0.0, norm = 0.0;
          for (int i = -op.radius; i <= op.radius; ++i) {
            const int r = horizontal ? row : row + i;
            const int c = horizontal ? col + i : col;
            if (r < 0 || r >= g || c < 0 || c >= g) continue;
            const int nid = chart * g * g + r * g + c;
            if (!map.occupied[static_cast<std::size_t>(nid)]) continue;
            acc += w[static_cast<std::size_t>(i + op.radius)] * in(nid);
            norm += w[static_cast<std::size_t>(i + op.radius)];
          }
          out(id) = acc / norm;
        }
      }
    }
    return out;
  };
  IrradianceMap out = map;
  out.values = pass(pass(map.values, true), false);
  return out;
}

Eigen::VectorXd primitive_shadow(const IrradianceMap& map, const std::vector<GaussianPrimitive>& primitives) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(primitives.size()));
  for (std::size_t k = 0; k < primitives.size(); ++k) {
    const int id = primitives[k].texel_id;
    if (id < 0 || id >= map.values.size() || !map.occupied[static_cast<std::size_t>(id)]) {
      fail(ErrorCode::kInvalidArgument, "primitive texel " + std::to_string(id) + " has no irradiance");
    }
    out(static_cast<Eigen::Index>(k)) = map.values(id);
  }
  return out;
}

}  // namespace prt
