#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "prt/render.hpp"
#include "prt/splat.hpp"

// Oracle suites shared by `prt validate` and the acceptance runner. Every
// check reports the measured error next to the threshold it is held to.

namespace prt {

struct Check {
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  bool inclusive = false;
  bool passed = false;
  std::string detail;
};

// measured < threshold, or measured <= threshold when `inclusive`.
Check make_check(std::string name, double measured, double threshold, bool inclusive = false,
                 std::string detail = {});

// The same check held to threshold * factor.
Check rescaled(const Check& check, double factor);

struct SuiteReport {
  std::string name;
  std::vector<Check> checks;
  bool passed() const;
};

// Texel parameter counts of both bases against 113 and 51.
std::vector<Check> check_param_counts();

// Max deviation of the quadrature Gram matrix of the order-8 basis from I.
Check check_sh_orthonormality(int samples);

// Random zonal sets of random order, each rotated by every random rotation:
// convention-scaled zh_expand against quadrature rotation of the aligned
// zonal function.
Check check_zh_rotation(int sets, int rotations, int samples, std::uint64_t seed);

// Sorted random splats in pixel space.
std::vector<Splat2D> random_splats(std::mt19937_64& rng, int count, int size);

// Tiled compositing against per-pixel brute force; scenes hold 1..max_splats.
Check check_compositing(int scenes, int max_splats, int size, std::uint64_t seed);

// Relative error of the SH dot product against Monte Carlo integration of
// the product of the two band-limited functions.
Check check_parseval(int pairs, int samples, std::uint64_t seed);

// BVH any-hit queries against the exhaustive test; counts disagreements.
Check check_bvh(int triangles, int rays, std::uint64_t seed);

// Unoccluded exactness, half-occlusion under full enumeration, and the
// 1-spp mean over `seeds` seeds in standard errors.
std::vector<Check> check_irradiance(int seeds);

// Central differences with step h over every appearance parameter of a
// 4-splat cluster under 4 lighting conditions.
Check check_gradients(const ShadingConfig& config, double h = 1e-4);

std::vector<std::string> suite_names();
// Throws invalid-argument for an unknown name; "all" runs every suite.
std::vector<SuiteReport> run_suites(const std::string& name);

}  // namespace prt
