#include "prt/splat.hpp"

#include <algorithm>
#include <cmath>

namespace prt {

Eigen::Vector3d Camera::center() const { return world_to_camera.inverse().translation(); }

Eigen::Vector3d Camera::ray_direction(const Eigen::Vector2d& p) const {
  const Eigen::Vector3d d((p.x() - cx) / fx, (p.y() - cy) / fy, 1.0);
  return (world_to_camera.linear().transpose() * d).normalized();
}

Eigen::Vector3d Camera::unproject(const Eigen::Vector2d& p, double z) const {
  const Eigen::Vector3d local((p.x() - cx) / fx * z, (p.y() - cy) / fy * z, z);
  return world_to_camera.inverse() * local;
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                       const Eigen::Vector3d& up, double fov_y_deg, int width, int height) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  const Eigen::Vector3d right = forward.cross(up).normalized();
  const Eigen::Vector3d down = forward.cross(right);
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fy = 0.5 * height / std::tan(0.5 * fov_y_deg * M_PI / 180.0);
  cam.fx = cam.fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  Eigen::Matrix3d r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  cam.world_to_camera.linear() = r;
  cam.world_to_camera.translation() = -r * eye;
  return cam;
}

void check_camera(const Camera& cam) {
  if (!(cam.fx > 0.0 && cam.fy > 0.0) || cam.width <= 0 || cam.height <= 0) {
    fail(ErrorCode::kInvalidArgument, "camera needs positive focal lengths and size");
  }
}

double Splat2D::kernel(const Eigen::Vector2d& p, double cutoff) const {
  const Eigen::Vector2d d = p - mean;
  const double m2 = d.dot(conic * d);
  if (!(m2 <= cutoff * cutoff)) return 0.0;
  return std::exp(-0.5 * m2);
}

std::optional<Splat2D> project_gaussian(const Eigen::Matrix3d& covariance, const Eigen::Vector3d& mean,
                                        const Camera& cam, const RasterConfig& config) {
  const Eigen::Vector3d t = cam.world_to_camera * mean;
  if (!(t.z() > config.near)) return std::nullopt;
  const double iz = 1.0 / t.z();
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx * iz, 0.0, -cam.fx * t.x() * iz * iz,
       0.0, cam.fy * iz, -cam.fy * t.y() * iz * iz;
  const Eigen::Matrix<double, 2, 3> jw = j * cam.world_to_camera.linear();
  Splat2D s;
  s.cov = jw * covariance * jw.transpose();
  s.cov(0, 1) = s.cov(1, 0) = 0.5 * (s.cov(0, 1) + s.cov(1, 0));
  s.cov.diagonal().array() += config.dilation;
  const double det = s.cov.determinant();
  if (!(det > 0.0)) return std::nullopt;
  s.conic << s.cov(1, 1) / det, -s.cov(0, 1) / det, -s.cov(1, 0) / det, s.cov(0, 0) / det;
  s.mean = Eigen::Vector2d(cam.fx * t.x() * iz + cam.cx, cam.fy * t.y() * iz + cam.cy);
  s.depth = t.z();
  const double mid = 0.5 * (s.cov(0, 0) + s.cov(1, 1));
  const double lambda = mid + std::sqrt(std::max(0.0, mid * mid - det));
  s.radius = config.cutoff * std::sqrt(lambda);
  return s;
}

std::vector<Splat2D> project_and_sort(std::span<const Eigen::Matrix3d> covariances,
                                      std::span<const Eigen::Vector3d> means, const Camera& cam,
                                      const RasterConfig& config) {
  check_camera(cam);
  if (covariances.size() != means.size()) {
    fail(ErrorCode::kInvalidArgument, "covariance and mean counts differ");
  }
  std::vector<std::optional<Splat2D>> projected(means.size());
  parallel_for(means.size(), [&](std::size_t k) {
    auto s = project_gaussian(covariances[k], means[k], cam, config);
    if (!s) return;
    s->index = static_cast<int>(k);
    // Cull splats whose support misses the image.
    if (s->mean.x() + s->radius < 0.0 || s->mean.x() - s->radius > cam.width ||
        s->mean.y() + s->radius < 0.0 || s->mean.y() - s->radius > cam.height) {
      return;
    }
    projected[k] = s;
  });
  std::vector<Splat2D> out;
  for (auto& s : projected) {
    if (s) out.push_back(*s);
  }
  std::sort(out.begin(), out.end(), [](const Splat2D& a, const Splat2D& b) {
    return a.depth < b.depth || (a.depth == b.depth && a.index < b.index);
  });
  return out;
}

namespace {

void check_sorted(std::span<const Splat2D> splats) {
  for (std::size_t k = 1; k < splats.size(); ++k) {
    if (splats[k].depth < splats[k - 1].depth) {
      fail(ErrorCode::kContractViolation, "splats are not sorted front to back");
    }
  }
}

void check_opacities(std::span<const Splat2D> splats, std::span<const double> opacities) {
  for (const Splat2D& s : splats) {
    if (s.index < 0 || static_cast<std::size_t>(s.index) >= opacities.size()) {
      fail(ErrorCode::kInvalidArgument, "splat index outside the opacity array");
    }
  }
}

}  // namespace

Coverage rasterize(std::span<const Splat2D> splats, std::span<const double> opacities, int width,
                   int height, const RasterConfig& config) {
  if (width <= 0 || height <= 0 || config.tile <= 0) {
    fail(ErrorCode::kInvalidArgument, "raster size must be positive");
  }
  check_sorted(splats);
  check_opacities(splats, opacities);
  const int ts = config.tile;
  const int tiles_x = (width + ts - 1) / ts;
  const int tiles_y = (height + ts - 1) / ts;

  // Bin splats into tiles; appending in sorted order keeps each list sorted.
  std::vector<std::vector<int>> bins(static_cast<std::size_t>(tiles_x * tiles_y));
  for (std::size_t k = 0; k < splats.size(); ++k) {
    const Splat2D& s = splats[k];
    const int x0 = std::max(0, static_cast<int>(std::floor((s.mean.x() - s.radius) / ts)));
    const int x1 = std::min(tiles_x - 1, static_cast<int>(std::floor((s.mean.x() + s.radius) / ts)));
    const int y0 = std::max(0, static_cast<int>(std::floor((s.mean.y() - s.radius) / ts)));
    const int y1 = std::min(tiles_y - 1, static_cast<int>(std::floor((s.mean.y() + s.radius) / ts)));
    for (int ty = y0; ty <= y1; ++ty) {
      for (int tx = x0; tx <= x1; ++tx) bins[static_cast<std::size_t>(ty * tiles_x + tx)].push_back(static_cast<int>(k));
    }
  }

  struct PixelEntries {
    std::vector<int> ids;
    std::vector<double> weights;
  };
  const auto pixel_count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  std::vector<PixelEntries> entries(pixel_count);
  Coverage cov;
  cov.width = width;
  cov.height = height;
  cov.alpha = Image1(width, height);

  parallel_for(bins.size(), [&](std::size_t tile) {
    const int tx = static_cast<int>(tile) % tiles_x;
    const int ty = static_cast<int>(tile) / tiles_x;
    const auto& bin = bins[tile];
    for (int y = ty * ts; y < std::min(height, (ty + 1) * ts); ++y) {
      for (int x = tx * ts; x < std::min(width, (tx + 1) * ts); ++x) {
        const Eigen::Vector2d p(x + 0.5, y + 0.5);
        PixelEntries& pe = entries[static_cast<std::size_t>(y) * width + x];
        double transmittance = 1.0;
        for (int k : bin) {
          const Splat2D& s = splats[static_cast<std::size_t>(k)];
          const double a = opacities[static_cast<std::size_t>(s.index)] * s.kernel(p, config.cutoff);
          if (a <= 0.0) continue;
          pe.ids.push_back(s.index);
          pe.weights.push_back(a * transmittance);
          transmittance *= 1.0 - a;
          if (transmittance < config.min_transmittance) break;
        }
        cov.alpha.pixel(x, y)(0) = 1.0 - transmittance;
      }
    }
  });

  cov.offsets.resize(pixel_count + 1);
  cov.offsets[0] = 0;
  for (std::size_t p = 0; p < pixel_count; ++p) {
    cov.offsets[p + 1] = cov.offsets[p] + static_cast<std::int64_t>(entries[p].ids.size());
  }
  cov.ids.resize(static_cast<std::size_t>(cov.offsets.back()));
  cov.weights.resize(cov.ids.size());
  for (std::size_t p = 0; p < pixel_count; ++p) {
    std::copy(entries[p].ids.begin(), entries[p].ids.end(), cov.ids.begin() + cov.offsets[p]);
    std::copy(entries[p].weights.begin(), entries[p].weights.end(), cov.weights.begin() + cov.offsets[p]);
  }
  cov.depths.assign(opacities.size(), 0.0);
  for (const Splat2D& s : splats) cov.depths[static_cast<std::size_t>(s.index)] = s.depth;
  return cov;
}

Eigen::MatrixXd composite_bruteforce(std::span<const Splat2D> splats, const Eigen::MatrixXd& values,
                                     std::span<const double> opacities, int width, int height,
                                     double cutoff) {
  check_sorted(splats);
  check_opacities(splats, opacities);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(values.rows(), static_cast<Eigen::Index>(width) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector2d p(x + 0.5, y + 0.5);
      double transmittance = 1.0;
      for (const Splat2D& s : splats) {
        const Eigen::Vector2d d = p - s.mean;
        const double m2 = d.dot(s.cov.inverse() * d);
        if (m2 > cutoff * cutoff) continue;
        const double a = opacities[static_cast<std::size_t>(s.index)] * std::exp(-0.5 * m2);
        out.col(static_cast<Eigen::Index>(y) * width + x) += values.col(s.index) * (a * transmittance);
        transmittance *= 1.0 - a;
      }
    }
  }
  return out;
}

Image3 composite_normals(const Coverage& cov, const Eigen::Matrix3Xd& normals) {
  Image3 out = composite<3>(cov, normals);
  for (Eigen::Index p = 0; p < out.size(); ++p) {
    const double n = out.data().col(p).norm();
    if (n > 0.0) out.data().col(p) /= n;
  }
  return out;
}

Image1 composite_depth(const Coverage& cov) {
  Image1 out(cov.width, cov.height);
  for (Eigen::Index p = 0; p < out.size(); ++p) {
    const double a = cov.alpha.data()(0, p);
    if (!(a > 0.0)) continue;
    double acc = 0.0;
    for (std::int64_t e = cov.begin(p); e < cov.end(p); ++e) {
      acc += cov.weights[static_cast<std::size_t>(e)] *
             cov.depths[static_cast<std::size_t>(cov.ids[static_cast<std::size_t>(e)])];
    }
    out.data()(0, p) = acc / a;
  }
  return out;
}

Image1 composite_shadow(const Coverage& cov, const Eigen::VectorXd& shadow) {
  Image1 out(cov.width, cov.height, 1.0);
  for (Eigen::Index p = 0; p < out.size(); ++p) {
    const double a = cov.alpha.data()(0, p);
    if (!(a > 0.0)) continue;
    double acc = 0.0;
    for (std::int64_t e = cov.begin(p); e < cov.end(p); ++e) {
      acc += cov.weights[static_cast<std::size_t>(e)] *
             (1.0 - shadow(cov.ids[static_cast<std::size_t>(e)]));
    }
    out.data()(0, p) = std::clamp(1.0 - acc / a, 0.0, 1.0);
  }
  return out;
}

GBuffer render_gbuffer(const Coverage& cov, const PrimitiveAttributes& attrs) {
  GBuffer g;
  g.diffuse = composite<3>(cov, attrs.diffuse);
  g.normal = composite_normals(cov, attrs.normals);
  g.roughness = composite<1>(cov, attrs.roughness.transpose());
  g.visibility = composite<1>(cov, attrs.visibility.transpose());
  g.shadow = attrs.shadow.size() == 0 ? Image1(cov.width, cov.height, 1.0)
                                      : composite_shadow(cov, attrs.shadow);
  g.alpha = cov.alpha;
  g.depth = composite_depth(cov);
  return g;
}

}  // namespace prt
