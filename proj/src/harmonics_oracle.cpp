#include "prt/harmonics_oracle.hpp"

#include <cmath>
#include <random>

#include <Eigen/Geometry>

namespace prt {

void gauss_legendre(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  nodes.resize(n);
  weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    nodes(i) = x;
    nodes(n - 1 - i) = -x;
    weights(i) = w;
    weights(n - 1 - i) = w;
  }
}

SphereQuadrature gauss_sphere_quadrature(int samples) {
  const int rings = std::max(2, static_cast<int>(std::ceil(std::sqrt(samples / 2.0))));
  const int azimuths = 2 * rings;
  Eigen::VectorXd z, wz;
  gauss_legendre(rings, z, wz);
  SphereQuadrature q;
  q.directions.resize(3, static_cast<Eigen::Index>(rings) * azimuths);
  q.weights.resize(q.directions.cols());
  const double dphi = 2.0 * M_PI / azimuths;
  Eigen::Index col = 0;
  for (int i = 0; i < rings; ++i) {
    const double r = std::sqrt(std::max(0.0, 1.0 - z(i) * z(i)));
    for (int j = 0; j < azimuths; ++j) {
      const double phi = (j + 0.5) * dphi;
      q.directions.col(col) << r * std::cos(phi), r * std::sin(phi), z(i);
      q.weights(col) = wz(i) * dphi;
      ++col;
    }
  }
  return q;
}

Eigen::MatrixXd sh_rotation_matrix_bruteforce(int order, const Eigen::Matrix3d& rotation,
                                              int samples) {
  check_sh_order(order);
  if (samples < 10000) {
    fail(ErrorCode::kInvalidArgument, "brute-force rotation needs at least 1e4 samples");
  }
  const SphereQuadrature q = gauss_sphere_quadrature(samples);
  const int count = sh_count(order);
  const Eigen::Matrix3d inverse = rotation.transpose();
  Eigen::MatrixXd result = Eigen::MatrixXd::Zero(count, count);
  constexpr Eigen::Index kChunk = 8192;
  Eigen::MatrixXd basis(count, kChunk), rotated(count, kChunk);
  for (Eigen::Index start = 0; start < q.directions.cols(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, q.directions.cols() - start);
    for (Eigen::Index s = 0; s < n; ++s) {
      const Eigen::Vector3d w = q.directions.col(start + s);
      const Eigen::Vector3d back = inverse * w;
      sh_eval_basis_unchecked<double>(w.x(), w.y(), w.z(), order, basis.col(s).data());
      sh_eval_basis_unchecked<double>(back.x(), back.y(), back.z(), order, rotated.col(s).data());
      rotated.col(s) *= q.weights(start + s);
    }
    result.noalias() += basis.leftCols(n) * rotated.leftCols(n).transpose();
  }
  return result;
}

ShVector<double> sh_rotate_bruteforce(const ShVector<double>& v, const Eigen::Matrix3d& rotation,
                                      int samples) {
  ShVector<double> out = v;
  out.coeffs = sh_rotation_matrix_bruteforce(v.order, rotation, samples) * v.coeffs;
  return out;
}

Eigen::Matrix3Xd stratified_sphere_directions(int n, std::uint64_t seed) {
  const int rows = std::max(1, static_cast<int>(std::sqrt(n / 2.0)));
  const int cols = std::max(1, n / rows);
  std::mt19937_64 rng(stream_seed(seed, 0x5742));
  Eigen::Matrix3Xd dirs(3, static_cast<Eigen::Index>(rows) * cols);
  Eigen::Index k = 0;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const double z = 1.0 - 2.0 * (i + uniform01(rng)) / rows;
      const double phi = 2.0 * M_PI * (j + uniform01(rng)) / cols;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      dirs.col(k++) << r * std::cos(phi), r * std::sin(phi), z;
    }
  }
  return dirs;
}

Eigen::Matrix3d random_rotation(std::uint64_t seed) {
  std::mt19937_64 rng(stream_seed(seed, 0x707));
  std::normal_distribution<double> normal;
  Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace prt
