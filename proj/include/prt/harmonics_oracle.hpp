#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "prt/harmonics.hpp"

// Quadrature-based reference computations. These never call the zonal or
// transport code paths; tests and `prt validate` compare against them.

namespace prt {

struct SphereQuadrature {
  Eigen::Matrix3Xd directions;
  Eigen::VectorXd weights;  // sums to 4 pi
};

// Gauss-Legendre nodes in cos(theta) times uniform azimuth, about `samples`
// points in total. Integrates band-limited products exactly up to the grid's
// polynomial degree.
SphereQuadrature gauss_sphere_quadrature(int samples);

// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);

// Matrix M with M(i, j) = integral of Y_i(w) Y_j(R^-1 w), so that M v holds
// the coefficients of the rotated function w -> f(R^-1 w).
Eigen::MatrixXd sh_rotation_matrix_bruteforce(int order, const Eigen::Matrix3d& rotation,
                                              int samples);

// Projects w -> eval(v, R^-1 w) back onto the basis by quadrature.
ShVector<double> sh_rotate_bruteforce(const ShVector<double>& v, const Eigen::Matrix3d& rotation,
                                      int samples);

// Jittered-stratified uniform directions on the sphere (equal-area strata in
// (cos theta, phi)); each carries weight 4 pi / n.
Eigen::Matrix3Xd stratified_sphere_directions(int n, std::uint64_t seed);

// Haar-uniform random rotation.
Eigen::Matrix3d random_rotation(std::uint64_t seed);

}  // namespace prt
