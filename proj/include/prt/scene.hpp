#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "prt/common.hpp"
#include "prt/harmonics.hpp"

namespace prt {

inline constexpr double kQuaternionTolerance = 1e-6;
inline constexpr double kDegenerateNormalNorm = 1e-8;

// ---------------------------------------------------------------------------
// Per-primitive geometry

// Tangent space of one texel on the posed base mesh. tbn columns are
// (tangent, bitangent, normal) and form a right-handed orthonormal basis.
struct TexelFrame {
  int texel_id = -1;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Matrix3d tbn = Eigen::Matrix3d::Identity();
};

struct WorldPlacement {
  Eigen::Vector3d translation;
  Eigen::Quaterniond rotation;  // unit norm
  Eigen::Matrix3d rotation_matrix() const { return rotation.toRotationMatrix(); }
};

// t = v + TBN dt,  R = TBN mat(dR), returned as a renormalized quaternion.
WorldPlacement world_from_local(const TexelFrame& frame, const Eigen::Vector3d& offset,
                                const Eigen::Quaterniond& local_rotation);

// Sigma = R diag(s) diag(s)^T R^T.
template <typename DerivedR, typename DerivedS>
Eigen::Matrix<typename DerivedR::Scalar, 3, 3> covariance(const Eigen::MatrixBase<DerivedR>& rotation,
                                                          const Eigen::MatrixBase<DerivedS>& scale) {
  using Scalar = typename DerivedR::Scalar;
  const Eigen::Matrix<Scalar, 3, 3> rs = rotation * scale.asDiagonal();
  return rs * rs.transpose();
}

// (n + dn) / |n + dn| where n is the third column of the rotation.
template <typename DerivedR, typename DerivedN>
Eigen::Matrix<typename DerivedR::Scalar, 3, 1> specular_normal(
    const Eigen::MatrixBase<DerivedR>& rotation, const Eigen::MatrixBase<DerivedN>& offset) {
  using Scalar = typename DerivedR::Scalar;
  const Eigen::Matrix<Scalar, 3, 1> v = rotation.col(2) + offset;
  const Scalar norm = v.norm();
  if (!(norm > Scalar(kDegenerateNormalNorm))) {
    fail(ErrorCode::kDegenerateNormal, "normal offset cancels the primitive normal");
  }
  return v / norm;
}

// Appearance and local geometry of one Gaussian, attached to a texel.
struct GaussianPrimitive {
  int texel_id = -1;
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();                  // dt, TBN units
  Eigen::Quaterniond local_rotation = Eigen::Quaterniond::Identity();  // dR
  Eigen::Vector3d scale = Eigen::Vector3d::Constant(0.005);
  double opacity = 1.0;
  Eigen::Vector3d albedo = Eigen::Vector3d::Constant(0.5);
  ZhLobes<double> transport;
  Eigen::Vector3d normal_offset = Eigen::Vector3d::Zero();  // dn
  double specular_visibility = 0.1;
  double roughness = 0.1;

  bool operator==(const GaussianPrimitive& other) const;
};

// ---------------------------------------------------------------------------
// Base mesh and rig

// Triangle mesh with per-part UV charts. Texel (chart, row, col) has id
// chart * grid^2 + row * grid + col and samples chart coordinate
// ((col + 0.5) / grid, (row + 0.5) / grid).
struct BaseMesh {
  Eigen::Matrix3Xd vertices;
  Eigen::Matrix3Xd normals;
  Eigen::Matrix3Xi triangles;
  Eigen::Matrix2Xd uvs;
  Eigen::VectorXi triangle_charts;
  Eigen::Matrix2Xi bone_ids;
  Eigen::Matrix2Xd bone_weights;
  int texel_grid = 64;
  int chart_count = 1;

  Eigen::Index vertex_count() const { return vertices.cols(); }
  Eigen::Index triangle_count() const { return triangles.cols(); }
  int texel_count() const { return chart_count * texel_grid * texel_grid; }
  Eigen::Vector2d texel_uv(int texel_id) const;
  int texel_chart(int texel_id) const { return texel_id / (texel_grid * texel_grid); }
};

// Area-weighted vertex normals from the triangle winding.
void compute_vertex_normals(BaseMesh& mesh);

// Per-bone rigid transforms mapping rest-pose points to posed points.
struct Pose {
  std::vector<Eigen::Isometry3d> bones;

  static Pose identity(std::size_t bone_count);
  bool is_identity() const;
};

// Linear blend skinning; positions and normals are transformed by the
// weight-blended bone matrices. The identity pose returns the input.
BaseMesh pose_mesh(const BaseMesh& mesh, const Pose& pose);

enum class RigKind { kArm, kHead };

struct JointLimits {
  double min_deg = -180.0;
  double max_deg = 180.0;
};

// Parameters of the synthetic articulated scenes (lengths in scene units).
//  arm:  box torso, two capsule bones hinged about -z at shoulder and elbow.
//  head: slab "shoulder" with a sphere head hinged about +x at the neck.
struct RigSpec {
  RigKind kind = RigKind::kArm;
  int texel_grid = 64;
  int segments = 24;
  int cap_rings = 6;
  int body_rings = 4;

  Eigen::Vector3d torso_size{0.4, 0.2, 0.6};
  Eigen::Vector3d shoulder{0.27, -0.17, 0.45};
  double upper_arm_length = 0.25;
  double upper_arm_radius = 0.05;
  double forearm_length = 0.25;
  double forearm_radius = 0.045;
  JointLimits shoulder_limits{-30.0, 180.0};
  JointLimits elbow_limits{0.0, 150.0};

  Eigen::Vector3d plate_size{0.5, 0.25, 0.04};
  double head_radius = 0.12;
  double neck_height = 0.16;
  JointLimits neck_limits{-45.0, 45.0};

  bool operator==(const RigSpec& other) const;
};

struct Bone {
  std::string name;
  int parent = -1;
  Eigen::Vector3d joint = Eigen::Vector3d::Zero();
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  JointLimits limits;
};

struct TexelSample {
  int texel_id = -1;
  int triangle = -1;
  Eigen::Vector3d barycentric = Eigen::Vector3d::Zero();
};

struct ToyRig {
  BaseMesh mesh;
  std::vector<Bone> bones;           // bone 0 is the fixed root
  std::vector<std::string> charts;   // part name per chart
  std::vector<TexelSample> texels;   // bind_texels(mesh)
  Eigen::Vector3d end_effector_rest = Eigen::Vector3d::Zero();
  int end_effector_bone = 0;

  std::size_t joint_count() const { return bones.size() - 1; }
};

ToyRig build_toy_rig(const RigSpec& spec);

// Hinge angles in degrees, one per non-root bone, in bone order.
Pose pose_from_angles(const ToyRig& rig, std::span<const double> angles_deg);

// Mesh statistics for the closed-part audit.
struct MeshAudit {
  int boundary_edges = 0;       // edges used once within a chart
  int nonmanifold_edges = 0;    // edges used more than twice
  int degenerate_triangles = 0;
};
MeshAudit audit_mesh(const BaseMesh& mesh);

// Vertex/triangle counts of one capsule part: (2R + B - 1) rings of S + 1
// vertices (seam duplicated) plus S vertices per pole.
struct PartCounts {
  Eigen::Index vertices;
  Eigen::Index triangles;
};
PartCounts capsule_counts(int segments, int cap_rings, int body_rings);
inline constexpr PartCounts kBoxCounts{24, 12};

// ---------------------------------------------------------------------------
// Texels

// Maps every texel center to the chart triangle containing it. Texels that
// fall outside all triangles are dropped.
std::vector<TexelSample> bind_texels(const BaseMesh& mesh);

// Frames for the given samples on an already-posed mesh. The tangent follows
// the UV u direction, the normal interpolates vertex normals, and the
// bitangent completes a right-handed frame. Throws degenerate-texel listing
// every texel whose UV mapping is singular.
std::vector<TexelFrame> texel_frames(const BaseMesh& posed, std::span<const TexelSample> samples);
std::vector<TexelFrame> texel_frames(const BaseMesh& mesh, const Pose& pose);

// World-space extent of one texel step along u and v at each sample, from
// the rest mesh.
std::vector<Eigen::Vector2d> texel_extents(const BaseMesh& mesh, std::span<const TexelSample> samples);

// ---------------------------------------------------------------------------
// Scene

struct Scene {
  RigSpec rig;
  std::vector<double> pose_deg;  // default pose, one angle per joint
  std::vector<GaussianPrimitive> primitives;
  std::vector<ShTransport<double>> sh_transport;  // empty unless the SH ablation is in use
};

// Neutral appearance used to seed fitting: gray albedo, band-0 transport that
// integrates constant unit radiance to 1, v = 0.1, sigma = 0.1, dn = 0.
void reset_appearance(GaussianPrimitive& primitive);

// One Gaussian per occupied texel with neutral appearance. Tangential scales
// are `coverage` times the texel extent, the normal scale a quarter of it.
std::vector<GaussianPrimitive> seed_primitives(const ToyRig& rig, double coverage = 0.6);

// World-space quantities for every primitive under a pose.
struct PosedPrimitives {
  std::vector<Eigen::Vector3d> means;
  std::vector<Eigen::Matrix3d> rotations;
  std::vector<Eigen::Matrix3d> rest_rotations;
  std::vector<Eigen::Matrix3d> covariances;
  std::vector<Eigen::Vector3d> mesh_normals;
  std::vector<double> opacities;

  std::size_t size() const { return means.size(); }
};

PosedPrimitives pose_primitives(const std::vector<GaussianPrimitive>& primitives,
                                const ToyRig& rig, const Pose& pose);

}  // namespace prt
