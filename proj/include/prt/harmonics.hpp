#pragma once

#include <array>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "prt/common.hpp"
#include "prt/lighting.hpp"

namespace prt {

// Real spherical harmonics, orthonormal over the sphere, Condon-Shortley
// phase, z-up polar axis. Coefficient (l, m) lives at zero-based index
// l^2 + l + m (one-based i = l^2 + l + m + 1).

inline constexpr int kMaxShOrder = 8;
inline constexpr int kColoredMaxBand = 3;
inline constexpr double kDirectionTolerance = 1e-9;
inline constexpr double kFrameTolerance = 1e-6;

constexpr int sh_count(int order) { return (order + 1) * (order + 1); }
constexpr int sh_index(int l, int m) { return l * l + l + m; }
inline int sh_band(int index) {
  return static_cast<int>(std::sqrt(static_cast<double>(index)) + 1e-9);
}

inline void check_sh_order(int order) {
  if (order < 0) fail(ErrorCode::kInvalidArgument, "negative SH order");
  if (order > kMaxShOrder) {
    fail(ErrorCode::kUnsupportedOrder,
         "SH order " + std::to_string(order) + " exceeds " + std::to_string(kMaxShOrder));
  }
}

template <typename Derived>
void check_direction(const Eigen::MatrixBase<Derived>& dir) {
  using std::abs;
  const double norm = static_cast<double>(dir.norm());
  if (!(abs(norm - 1.0) <= kDirectionTolerance)) {
    fail(ErrorCode::kInvalidArgument, "direction is not unit length (norm " +
                                          std::to_string(norm) + ")");
  }
}

// Per-channel SH coefficients. coeffs is sh_count(order) x channels; its
// column-major storage is the channel-major flat serialization.
template <typename Scalar = double>
struct ShVector {
  using Coeffs = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  int order = 0;
  Coeffs coeffs;

  ShVector() = default;
  ShVector(int order_, int channels) : order(order_), coeffs(Coeffs::Zero(sh_count(order_), channels)) {
    check_sh_order(order_);
  }

  int channels() const { return static_cast<int>(coeffs.cols()); }
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> flat() const {
    return {coeffs.data(), coeffs.size()};
  }
};

namespace detail {

// K_lm = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) for 0 <= m <= l <= kMaxShOrder.
struct ShNormalization {
  std::array<double, sh_count(kMaxShOrder)> k{};
  ShNormalization() {
    for (int l = 0; l <= kMaxShOrder; ++l) {
      for (int m = 0; m <= l; ++m) {
        double ratio = 1.0;
        for (int f = l - m + 1; f <= l + m; ++f) ratio /= f;
        k[static_cast<std::size_t>(sh_index(l, m))] = std::sqrt((2.0 * l + 1.0) / (4.0 * M_PI) * ratio);
      }
    }
  }
  double operator()(int l, int m) const { return k[static_cast<std::size_t>(sh_index(l, m))]; }
};

inline const ShNormalization& sh_normalization() {
  static const ShNormalization table;
  return table;
}

}  // namespace detail

// Writes the sh_count(order) basis values at (x, y, z) into out. No input
// validation; the direction is assumed unit length.
template <typename Scalar>
void sh_eval_basis_unchecked(const Scalar& x, const Scalar& y, const Scalar& z, int order,
                             Scalar* out) {
  const auto& norm = detail::sh_normalization();
  const Scalar sqrt2 = Scalar(M_SQRT2);
  // cos_m / sin_m hold Re / Im of (x + i y)^m, i.e. sin^m(theta) cos/sin(m phi).
  Scalar cos_m = Scalar(1);
  Scalar sin_m = Scalar(0);
  // Associated Legendre polynomials with the sin^m(theta) factor removed.
  Scalar p_mm = Scalar(1);
  for (int m = 0; m <= order; ++m) {
    if (m > 0) {
      const Scalar c = x * cos_m - y * sin_m;
      const Scalar s = x * sin_m + y * cos_m;
      cos_m = c;
      sin_m = s;
      p_mm = -Scalar(2 * m - 1) * p_mm;
    }
    Scalar p_prev = Scalar(0);
    Scalar p_cur = p_mm;
    for (int l = m; l <= order; ++l) {
      if (l == m + 1) {
        p_prev = p_cur;
        p_cur = z * Scalar(2 * m + 1) * p_mm;
      } else if (l > m + 1) {
        const Scalar next = (Scalar(2 * l - 1) * z * p_cur - Scalar(l + m - 1) * p_prev) / Scalar(l - m);
        p_prev = p_cur;
        p_cur = next;
      }
      const Scalar value = Scalar(norm(l, m)) * p_cur;
      if (m == 0) {
        out[sh_index(l, 0)] = value;
      } else {
        out[sh_index(l, m)] = sqrt2 * value * cos_m;
        out[sh_index(l, -m)] = sqrt2 * value * sin_m;
      }
    }
  }
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> sh_eval_basis(
    const Eigen::MatrixBase<Derived>& dir, int order) {
  using Scalar = typename Derived::Scalar;
  check_sh_order(order);
  check_direction(dir);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(sh_count(order));
  sh_eval_basis_unchecked<Scalar>(dir(0), dir(1), dir(2), order, out.data());
  return out;
}

// Evaluates every channel of v at dir.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> sh_eval(const ShVector<Scalar>& v,
                                                 const Eigen::MatrixBase<Derived>& dir) {
  return v.coeffs.transpose() * sh_eval_basis(dir, v.order);
}

// Single zonal lobe: coeffs[l^2 + l + m] = z_l Y_lm(dir), no convention
// factor applied (the sqrt(4 pi / (2l + 1)) of the addition theorem is left
// to the coefficients).
template <typename DerivedZ, typename DerivedD>
ShVector<typename DerivedZ::Scalar> zh_expand(const Eigen::MatrixBase<DerivedZ>& zonal,
                                              const Eigen::MatrixBase<DerivedD>& dir) {
  using Scalar = typename DerivedZ::Scalar;
  const int order = static_cast<int>(zonal.size()) - 1;
  ShVector<Scalar> out(order, 1);
  const auto basis = sh_eval_basis(dir.template cast<Scalar>(), order);
  for (int l = 0; l <= order; ++l) {
    for (int m = -l; m <= l; ++m) out.coeffs(sh_index(l, m), 0) = zonal(l) * basis(sh_index(l, m));
  }
  return out;
}

// Three zonal lobes (tangent, bitangent, normal) per texel: colored bands
// 0..3 (per channel) and monochrome bands 4..8 shared by all channels.
// Stored flat, 51 scalars.
template <typename Scalar = double>
struct ZhLobes {
  static constexpr int kLobes = 3;
  static constexpr int kColoredBands = kColoredMaxBand + 1;
  static constexpr int kMonoBands = kMaxShOrder - kColoredMaxBand;
  static constexpr int kSize = kLobes * 3 * kColoredBands + kLobes * kMonoBands;

  using Values = Eigen::Matrix<Scalar, kSize, 1>;
  Values values = Values::Zero();

  static constexpr int index(int lobe, int channel, int band) {
    return band <= kColoredMaxBand ? lobe * 3 * kColoredBands + channel * kColoredBands + band
                                   : kLobes * 3 * kColoredBands + lobe * kMonoBands +
                                         (band - kColoredMaxBand - 1);
  }
  Scalar& at(int lobe, int channel, int band) { return values(index(lobe, channel, band)); }
  const Scalar& at(int lobe, int channel, int band) const {
    return values(index(lobe, channel, band));
  }

  bool operator==(const ZhLobes& other) const { return values == other.values; }
};

// Full SH transport for the unrotated-SH ablation: colored bands 0..3 per
// channel plus monochrome bands 4..8, 113 scalars.
template <typename Scalar = double>
struct ShTransport {
  static constexpr int kColoredCount = sh_count(kColoredMaxBand);
  static constexpr int kSize = 3 * kColoredCount + sh_count(kMaxShOrder) - kColoredCount;

  using Values = Eigen::Matrix<Scalar, kSize, 1>;
  Values values = Values::Zero();

  static constexpr int index(int channel, int coeff) {
    return coeff < kColoredCount ? channel * kColoredCount + coeff
                                 : 3 * kColoredCount + (coeff - kColoredCount);
  }
  Scalar& at(int channel, int coeff) { return values(index(channel, coeff)); }
  const Scalar& at(int channel, int coeff) const { return values(index(channel, coeff)); }

  bool operator==(const ShTransport& other) const { return values == other.values; }
};

template <typename Scalar>
using TransportMatrix = Eigen::Matrix<Scalar, sh_count(kMaxShOrder), 3>;
template <typename Scalar>
using LobeBasis = Eigen::Matrix<Scalar, sh_count(kMaxShOrder), 3>;

// Basis values at the three frame axes, one column per lobe.
template <typename DerivedR>
LobeBasis<typename DerivedR::Scalar> lobe_basis(const Eigen::MatrixBase<DerivedR>& frame) {
  using Scalar = typename DerivedR::Scalar;
  LobeBasis<Scalar> basis;
  for (int lobe = 0; lobe < 3; ++lobe) {
    sh_eval_basis_unchecked<Scalar>(frame(0, lobe), frame(1, lobe), frame(2, lobe), kMaxShOrder,
                                    basis.col(lobe).data());
  }
  return basis;
}

template <typename DerivedR>
void check_frame(const Eigen::MatrixBase<DerivedR>& frame) {
  using std::abs;
  const auto gram = (frame.transpose() * frame).eval();
  const double off = static_cast<double>(
      (gram - decltype(gram)::Identity()).cwiseAbs().maxCoeff());
  const double det = static_cast<double>(frame.determinant());
  if (!(off <= kFrameTolerance) || !(abs(det - 1.0) <= kFrameTolerance)) {
    fail(ErrorCode::kInvalidFrame, "frame is not right-handed orthonormal");
  }
}

// d^i = z^{0l} Y_lm(t) + z^{1l} Y_lm(b) + z^{2l} Y_lm(n), with the basis
// values precomputed per lobe.
template <typename Scalar>
TransportMatrix<Scalar> transport_from_basis(const ZhLobes<Scalar>& z,
                                             const LobeBasis<Scalar>& basis) {
  TransportMatrix<Scalar> d;
  for (int l = 0; l <= kMaxShOrder; ++l) {
    for (int c = 0; c < 3; ++c) {
      const Scalar z0 = z.at(0, c, l), z1 = z.at(1, c, l), z2 = z.at(2, c, l);
      for (int m = -l; m <= l; ++m) {
        const int i = sh_index(l, m);
        d(i, c) = z0 * basis(i, 0) + z1 * basis(i, 1) + z2 * basis(i, 2);
      }
    }
  }
  return d;
}

template <typename Scalar, typename DerivedT, typename DerivedB, typename DerivedN>
ShVector<Scalar> transport_from_zh(const ZhLobes<Scalar>& z,
                                   const Eigen::MatrixBase<DerivedT>& tangent,
                                   const Eigen::MatrixBase<DerivedB>& bitangent,
                                   const Eigen::MatrixBase<DerivedN>& normal) {
  Eigen::Matrix<Scalar, 3, 3> frame;
  frame << tangent.template cast<Scalar>(), bitangent.template cast<Scalar>(),
      normal.template cast<Scalar>();
  check_frame(frame);
  ShVector<Scalar> out(kMaxShOrder, 3);
  out.coeffs = transport_from_basis(z, lobe_basis(frame));
  return out;
}

template <typename Scalar>
TransportMatrix<Scalar> expand_sh_transport(const ShTransport<Scalar>& t) {
  TransportMatrix<Scalar> d;
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < sh_count(kMaxShOrder); ++i) d(i, c) = t.at(c, i);
  }
  return d;
}

// Freezes a zonal transport into SH coefficients for a fixed frame. Monochrome
// bands are taken from channel 0 (they are identical across channels).
template <typename Scalar>
ShTransport<Scalar> sh_transport_from_zh(const ZhLobes<Scalar>& z,
                                         const LobeBasis<Scalar>& basis) {
  const TransportMatrix<Scalar> d = transport_from_basis(z, basis);
  ShTransport<Scalar> out;
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < ShTransport<Scalar>::kColoredCount; ++i) out.at(c, i) = d(i, c);
  }
  for (int i = ShTransport<Scalar>::kColoredCount; i < sh_count(kMaxShOrder); ++i) {
    out.at(0, i) = d(i, 0);
  }
  return out;
}

enum class TransportBasis { kSh, kZh };

// Scalars stored per texel for the diffuse transport.
constexpr int texel_param_count(TransportBasis basis) {
  return basis == TransportBasis::kSh ? ShTransport<double>::kSize : ZhLobes<double>::kSize;
}

// Projections of incident light onto the basis.
ShVector<double> sh_project_env(const EnvironmentMap& env, int order);
ShVector<double> sh_project_point_lights(const LightRig& rig, int order);
ShVector<double> sh_project_directional(const DirectionalLights& lights, int order);

}  // namespace prt
