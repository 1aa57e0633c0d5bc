#include "prt/scene.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>
#include <tuple>

namespace prt {

WorldPlacement world_from_local(const TexelFrame& frame, const Eigen::Vector3d& offset,
                                const Eigen::Quaterniond& local_rotation) {
  if (!(std::abs(local_rotation.norm() - 1.0) <= kQuaternionTolerance)) {
    fail(ErrorCode::kInvalidArgument, "local rotation is not a unit quaternion");
  }
  const Eigen::Matrix3d rotation = frame.tbn * local_rotation.toRotationMatrix();
  Eigen::Quaterniond q(rotation);
  q.normalize();
  return {frame.position + frame.tbn * offset, q};
}

bool GaussianPrimitive::operator==(const GaussianPrimitive& other) const {
  return texel_id == other.texel_id && offset == other.offset &&
         local_rotation.coeffs() == other.local_rotation.coeffs() && scale == other.scale &&
         opacity == other.opacity && albedo == other.albedo && transport == other.transport &&
         normal_offset == other.normal_offset &&
         specular_visibility == other.specular_visibility && roughness == other.roughness;
}

Eigen::Vector2d BaseMesh::texel_uv(int texel_id) const {
  const int local = texel_id % (texel_grid * texel_grid);
  const int row = local / texel_grid;
  const int col = local % texel_grid;
  return {(col + 0.5) / texel_grid, (row + 0.5) / texel_grid};
}

void compute_vertex_normals(BaseMesh& mesh) {
  mesh.normals = Eigen::Matrix3Xd::Zero(3, mesh.vertex_count());
  for (Eigen::Index t = 0; t < mesh.triangle_count(); ++t) {
    const auto tri = mesh.triangles.col(t);
    const Eigen::Vector3d n = (mesh.vertices.col(tri(1)) - mesh.vertices.col(tri(0)))
                                  .cross(mesh.vertices.col(tri(2)) - mesh.vertices.col(tri(0)));
    for (int k = 0; k < 3; ++k) mesh.normals.col(tri(k)) += n;
  }
  for (Eigen::Index v = 0; v < mesh.vertex_count(); ++v) {
    const double norm = mesh.normals.col(v).norm();
    if (norm > 0.0) mesh.normals.col(v) /= norm;
  }
}

// ---------------------------------------------------------------------------
// Pose and skinning

Pose Pose::identity(std::size_t bone_count) {
  Pose pose;
  pose.bones.assign(bone_count, Eigen::Isometry3d::Identity());
  return pose;
}

bool Pose::is_identity() const {
  for (const auto& b : bones) {
    if (b.matrix() != Eigen::Matrix4d::Identity()) return false;
  }
  return true;
}

BaseMesh pose_mesh(const BaseMesh& mesh, const Pose& pose) {
  if (pose.is_identity()) return mesh;
  BaseMesh out = mesh;
  for (Eigen::Index v = 0; v < mesh.vertex_count(); ++v) {
    Eigen::Matrix<double, 3, 4> blend = Eigen::Matrix<double, 3, 4>::Zero();
    for (int k = 0; k < 2; ++k) {
      const double w = mesh.bone_weights(k, v);
      if (w == 0.0) continue;
      const auto bone = static_cast<std::size_t>(mesh.bone_ids(k, v));
      if (bone >= pose.bones.size()) {
        fail(ErrorCode::kInvalidArgument, "vertex references a bone missing from the pose");
      }
      blend += w * pose.bones[bone].matrix().topRows<3>();
    }
    out.vertices.col(v) = blend.leftCols<3>() * mesh.vertices.col(v) + blend.col(3);
    if (mesh.normals.cols() == mesh.vertex_count()) {
      const Eigen::Vector3d n = blend.leftCols<3>() * mesh.normals.col(v);
      out.normals.col(v) = n.normalized();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rig construction

namespace {

struct MeshBuilder {
  std::vector<Eigen::Vector3d> positions;
  std::vector<Eigen::Vector3d> normals;
  std::vector<Eigen::Vector2d> uvs;
  std::vector<std::array<int, 2>> bone_ids;
  std::vector<Eigen::Vector2d> bone_weights;
  std::vector<Eigen::Vector3i> triangles;
  std::vector<int> charts;

  int add_vertex(const Eigen::Vector3d& p, const Eigen::Vector3d& n, const Eigen::Vector2d& uv,
                 std::array<int, 2> bones, const Eigen::Vector2d& weights) {
    positions.push_back(p);
    normals.push_back(n);
    uvs.push_back(uv);
    bone_ids.push_back(bones);
    bone_weights.push_back(weights);
    return static_cast<int>(positions.size()) - 1;
  }
  void add_triangle(int a, int b, int c, int chart) {
    triangles.emplace_back(a, b, c);
    charts.push_back(chart);
  }

  BaseMesh build(int texel_grid, int chart_count) const {
    BaseMesh mesh;
    const auto nv = static_cast<Eigen::Index>(positions.size());
    const auto nt = static_cast<Eigen::Index>(triangles.size());
    mesh.vertices.resize(3, nv);
    mesh.normals.resize(3, nv);
    mesh.uvs.resize(2, nv);
    mesh.bone_ids.resize(2, nv);
    mesh.bone_weights.resize(2, nv);
    for (Eigen::Index i = 0; i < nv; ++i) {
      const auto k = static_cast<std::size_t>(i);
      mesh.vertices.col(i) = positions[k];
      mesh.normals.col(i) = normals[k];
      mesh.uvs.col(i) = uvs[k];
      mesh.bone_ids.col(i) << bone_ids[k][0], bone_ids[k][1];
      mesh.bone_weights.col(i) = bone_weights[k];
    }
    mesh.triangles.resize(3, nt);
    mesh.triangle_charts.resize(nt);
    for (Eigen::Index t = 0; t < nt; ++t) {
      mesh.triangles.col(t) = triangles[static_cast<std::size_t>(t)];
      mesh.triangle_charts(t) = charts[static_cast<std::size_t>(t)];
    }
    mesh.texel_grid = texel_grid;
    mesh.chart_count = chart_count;
    return mesh;
  }
};

// Axis-aligned box; the six faces tile the chart as a 3 x 2 grid of cells.
void add_box(MeshBuilder& mb, const Eigen::Vector3d& center, const Eigen::Vector3d& size,
             int chart, int bone) {
  const Eigen::Vector3d half = 0.5 * size;
  struct Face {
    Eigen::Vector3i n, a, b;  // a x b = n
  };
  const std::array<Face, 6> faces{{
      {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}},
      {{-1, 0, 0}, {0, -1, 0}, {0, 0, 1}},
      {{0, 1, 0}, {-1, 0, 0}, {0, 0, 1}},
      {{0, -1, 0}, {1, 0, 0}, {0, 0, 1}},
      {{0, 0, 1}, {1, 0, 0}, {0, 1, 0}},
      {{0, 0, -1}, {1, 0, 0}, {0, -1, 0}},
  }};
  for (int f = 0; f < 6; ++f) {
    const Face& face = faces[static_cast<std::size_t>(f)];
    const Eigen::Vector2d cell_min((f % 3) / 3.0, (f / 3) / 2.0);
    const Eigen::Vector2d cell_size(1.0 / 3.0, 1.0 / 2.0);
    std::array<int, 4> ids{};
    for (int c = 0; c < 4; ++c) {
      const int u = (c == 1 || c == 2) ? 1 : 0;
      const int v = (c >= 2) ? 1 : 0;
      // Integer sign pattern keeps shared corners bitwise identical.
      const Eigen::Vector3i sign = face.n + (2 * u - 1) * face.a + (2 * v - 1) * face.b;
      const Eigen::Vector3d p = center + sign.cast<double>().cwiseProduct(half);
      const Eigen::Vector2d uv = cell_min + Eigen::Vector2d(u, v).cwiseProduct(cell_size);
      ids[static_cast<std::size_t>(c)] =
          mb.add_vertex(p, face.n.cast<double>(), uv, {bone, bone}, {1.0, 0.0});
    }
    mb.add_triangle(ids[0], ids[1], ids[2], chart);
    mb.add_triangle(ids[0], ids[2], ids[3], chart);
  }
}

struct CapsuleShape {
  double radius;
  double length;
  Eigen::Vector3d origin;
  Eigen::Matrix3d frame;  // column 0 is the capsule axis
  int segments, cap_rings, body_rings;
};

// Weight function: axial coordinate -> (bone ids, weights).
template <typename Skin>
void add_capsule(MeshBuilder& mb, const CapsuleShape& s, int chart, Skin&& skin) {
  struct Ring {
    double axial, radial, arc, n_axial, n_radial;
  };
  const double r = s.radius;
  const double quarter = 0.5 * M_PI;
  std::vector<Ring> rings;
  for (int i = 1; i <= s.cap_rings; ++i) {
    const double a = -quarter + i * quarter / s.cap_rings;
    rings.push_back({r * std::sin(a), r * std::cos(a), r * (a + quarter), std::sin(a), std::cos(a)});
  }
  for (int k = 1; k < s.body_rings; ++k) {
    const double x = s.length * k / s.body_rings;
    rings.push_back({x, r, r * quarter + x, 0.0, 1.0});
  }
  // With no body rings the two caps share the equator ring (a sphere).
  for (int i = s.body_rings == 0 ? 1 : 0; i < s.cap_rings; ++i) {
    const double a = i * quarter / s.cap_rings;
    rings.push_back({s.length + r * std::sin(a), r * std::cos(a), r * quarter + s.length + r * a,
                     std::sin(a), std::cos(a)});
  }
  const double total_arc = M_PI * r + s.length;
  const int seg = s.segments;
  auto world = [&](double axial, double ry, double rz) {
    return Eigen::Vector3d(s.origin + s.frame * Eigen::Vector3d(axial, ry, rz));
  };
  auto add = [&](double axial, const Eigen::Vector3d& local_n, double ry, double rz, double u,
                 double v) {
    const auto [bones, weights] = skin(axial);
    return mb.add_vertex(world(axial, ry, rz), s.frame * local_n, {u, v}, bones, weights);
  };

  std::vector<std::vector<int>> ids(rings.size());
  for (std::size_t k = 0; k < rings.size(); ++k) {
    const Ring& ring = rings[k];
    for (int j = 0; j <= seg; ++j) {
      const double theta = 2.0 * M_PI * (j % seg) / seg;
      const double c = std::cos(theta), sn = std::sin(theta);
      const Eigen::Vector3d n(ring.n_axial, ring.n_radial * c, ring.n_radial * sn);
      ids[k].push_back(add(ring.axial, n, ring.radial * c, ring.radial * sn,
                           static_cast<double>(j) / seg, ring.arc / total_arc));
    }
  }
  std::vector<int> back_pole, front_pole;
  for (int j = 0; j < seg; ++j) {
    const double u = (j + 0.5) / seg;
    back_pole.push_back(add(-r, Eigen::Vector3d(-1, 0, 0), 0.0, 0.0, u, 0.0));
    front_pole.push_back(add(s.length + r, Eigen::Vector3d(1, 0, 0), 0.0, 0.0, u, 1.0));
  }
  for (int j = 0; j < seg; ++j) {
    mb.add_triangle(back_pole[static_cast<std::size_t>(j)], ids.front()[static_cast<std::size_t>(j + 1)],
                    ids.front()[static_cast<std::size_t>(j)], chart);
  }
  for (std::size_t k = 0; k + 1 < rings.size(); ++k) {
    const auto& a = ids[k];
    const auto& b = ids[k + 1];
    for (int j = 0; j < seg; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      mb.add_triangle(a[ju], a[ju + 1], b[ju + 1], chart);
      mb.add_triangle(a[ju], b[ju + 1], b[ju], chart);
    }
  }
  for (int j = 0; j < seg; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    mb.add_triangle(ids.back()[ju], ids.back()[ju + 1], front_pole[ju], chart);
  }
}

double deg2rad(double d) { return d * M_PI / 180.0; }

}  // namespace

PartCounts capsule_counts(int segments, int cap_rings, int body_rings) {
  const Eigen::Index rings = 2 * cap_rings + body_rings - 1;
  return {rings * (segments + 1) + 2 * segments, 2 * static_cast<Eigen::Index>(segments) * rings};
}

bool RigSpec::operator==(const RigSpec& o) const {
  return kind == o.kind && texel_grid == o.texel_grid && segments == o.segments &&
         cap_rings == o.cap_rings && body_rings == o.body_rings && torso_size == o.torso_size &&
         shoulder == o.shoulder && upper_arm_length == o.upper_arm_length &&
         upper_arm_radius == o.upper_arm_radius && forearm_length == o.forearm_length &&
         forearm_radius == o.forearm_radius && shoulder_limits.min_deg == o.shoulder_limits.min_deg &&
         shoulder_limits.max_deg == o.shoulder_limits.max_deg &&
         elbow_limits.min_deg == o.elbow_limits.min_deg &&
         elbow_limits.max_deg == o.elbow_limits.max_deg && plate_size == o.plate_size &&
         head_radius == o.head_radius && neck_height == o.neck_height &&
         neck_limits.min_deg == o.neck_limits.min_deg && neck_limits.max_deg == o.neck_limits.max_deg;
}

ToyRig build_toy_rig(const RigSpec& spec) {
  if (spec.texel_grid < 1 || spec.segments < 3 || spec.cap_rings < 1 || spec.body_rings < 1) {
    fail(ErrorCode::kInvalidArgument, "rig tessellation parameters out of range");
  }
  ToyRig rig;
  MeshBuilder mb;
  const Eigen::Vector3d down_axis = -Eigen::Vector3d::UnitZ();
  if (spec.kind == RigKind::kArm) {
    if (!(spec.upper_arm_length > 0 && spec.forearm_length > 0 && spec.upper_arm_radius > 0 &&
          spec.forearm_radius > 0 && (spec.torso_size.array() > 0).all())) {
      fail(ErrorCode::kInvalidArgument, "arm rig dimensions must be positive");
    }
    const Eigen::Vector3d torso_center(0.0, 0.0, 0.5 * spec.torso_size.z());
    add_box(mb, torso_center, spec.torso_size, 0, 0);

    const Eigen::Vector3d elbow = spec.shoulder + spec.upper_arm_length * Eigen::Vector3d::UnitX();
    const double l1 = spec.upper_arm_length;
    const double r1 = spec.upper_arm_radius;
    add_capsule(mb,
                {r1, l1, spec.shoulder, Eigen::Matrix3d::Identity(), spec.segments, spec.cap_rings,
                 spec.body_rings},
                1, [&](double axial) {
                  // The elbow cap blends half-way into the forearm bone.
                  const double t = std::clamp((axial - l1) / r1, 0.0, 1.0);
                  const double w2 = 0.5 * t;
                  return std::pair{std::array<int, 2>{1, 2}, Eigen::Vector2d(1.0 - w2, w2)};
                });
    add_capsule(mb,
                {spec.forearm_radius, spec.forearm_length, elbow, Eigen::Matrix3d::Identity(),
                 spec.segments, spec.cap_rings, spec.body_rings},
                2, [](double) {
                  return std::pair{std::array<int, 2>{2, 2}, Eigen::Vector2d(1.0, 0.0)};
                });
    rig.bones = {{"torso", -1, Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitZ(), {0.0, 0.0}},
                 {"shoulder", 0, spec.shoulder, down_axis, spec.shoulder_limits},
                 {"elbow", 1, elbow, down_axis, spec.elbow_limits}};
    rig.charts = {"torso", "upper_arm", "forearm"};
    rig.end_effector_rest = elbow + spec.forearm_length * Eigen::Vector3d::UnitX();
    rig.end_effector_bone = 2;
    rig.mesh = mb.build(spec.texel_grid, 3);
  } else {
    if (!(spec.head_radius > 0 && (spec.plate_size.array() > 0).all())) {
      fail(ErrorCode::kInvalidArgument, "head rig dimensions must be positive");
    }
    add_box(mb, Eigen::Vector3d(0.0, 0.0, -0.5 * spec.plate_size.z()), spec.plate_size, 0, 0);
    Eigen::Matrix3d frame;
    frame << Eigen::Vector3d::UnitZ(), Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY();
    const Eigen::Vector3d head_center(0.0, 0.0, spec.neck_height);
    add_capsule(mb,
                {spec.head_radius, 0.0, head_center, frame, spec.segments, spec.cap_rings, 0}, 1,
                [](double) {
                  return std::pair{std::array<int, 2>{1, 1}, Eigen::Vector2d(1.0, 0.0)};
                });
    rig.bones = {{"shoulder_plate", -1, Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitZ(), {0.0, 0.0}},
                 {"neck", 0, Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitX(), spec.neck_limits}};
    rig.charts = {"shoulder", "head"};
    rig.end_effector_rest = head_center + spec.head_radius * Eigen::Vector3d::UnitZ();
    rig.end_effector_bone = 1;
    rig.mesh = mb.build(spec.texel_grid, 2);
  }
  rig.texels = bind_texels(rig.mesh);
  return rig;
}

Pose pose_from_angles(const ToyRig& rig, std::span<const double> angles_deg) {
  if (angles_deg.size() != rig.joint_count()) {
    fail(ErrorCode::kInvalidArgument, "expected " + std::to_string(rig.joint_count()) +
                                          " joint angles, got " + std::to_string(angles_deg.size()));
  }
  Pose pose = Pose::identity(rig.bones.size());
  for (std::size_t b = 1; b < rig.bones.size(); ++b) {
    const Bone& bone = rig.bones[b];
    const double angle = angles_deg[b - 1];
    if (angle < bone.limits.min_deg || angle > bone.limits.max_deg) {
      fail(ErrorCode::kInvalidArgument, "joint '" + bone.name + "' angle " +
                                            std::to_string(angle) + " outside its limits");
    }
    Eigen::Isometry3d local = Eigen::Isometry3d::Identity();
    local.translate(bone.joint);
    local.rotate(Eigen::AngleAxisd(deg2rad(angle), bone.axis));
    local.translate(-bone.joint);
    pose.bones[b] = pose.bones[static_cast<std::size_t>(bone.parent)] * local;
  }
  return pose;
}

MeshAudit audit_mesh(const BaseMesh& mesh) {
  MeshAudit audit;
  using Key = std::tuple<int, std::uint64_t, std::uint64_t, std::uint64_t>;
  std::map<Key, int> welded;
  std::vector<int> weld_id(static_cast<std::size_t>(mesh.vertex_count()));
  std::vector<int> vertex_chart(static_cast<std::size_t>(mesh.vertex_count()), 0);
  for (Eigen::Index t = 0; t < mesh.triangle_count(); ++t) {
    for (int k = 0; k < 3; ++k) {
      vertex_chart[static_cast<std::size_t>(mesh.triangles(k, t))] = mesh.triangle_charts(t);
    }
  }
  for (Eigen::Index v = 0; v < mesh.vertex_count(); ++v) {
    std::array<std::uint64_t, 3> bits{};
    for (int k = 0; k < 3; ++k) std::memcpy(&bits[static_cast<std::size_t>(k)], &mesh.vertices(k, v), 8);
    const Key key{vertex_chart[static_cast<std::size_t>(v)], bits[0], bits[1], bits[2]};
    const auto [it, inserted] = welded.emplace(key, static_cast<int>(welded.size()));
    weld_id[static_cast<std::size_t>(v)] = it->second;
  }
  std::map<std::pair<int, int>, int> edges;
  for (Eigen::Index t = 0; t < mesh.triangle_count(); ++t) {
    const auto tri = mesh.triangles.col(t);
    const Eigen::Vector3d a = mesh.vertices.col(tri(0)), b = mesh.vertices.col(tri(1)),
                          c = mesh.vertices.col(tri(2));
    if ((b - a).cross(c - a).norm() < 1e-14) ++audit.degenerate_triangles;
    for (int k = 0; k < 3; ++k) {
      int i = weld_id[static_cast<std::size_t>(tri(k))];
      int j = weld_id[static_cast<std::size_t>(tri((k + 1) % 3))];
      if (i > j) std::swap(i, j);
      ++edges[{i, j}];
    }
  }
  for (const auto& [edge, count] : edges) {
    if (count == 1) ++audit.boundary_edges;
    if (count > 2) ++audit.nonmanifold_edges;
  }
  return audit;
}

// ---------------------------------------------------------------------------
// Texels

std::vector<TexelSample> bind_texels(const BaseMesh& mesh) {
  const int grid = mesh.texel_grid;
  // Bucket triangles by the texel cells their UV bounding boxes touch.
  std::vector<std::vector<int>> buckets(static_cast<std::size_t>(mesh.texel_count()));
  for (Eigen::Index t = 0; t < mesh.triangle_count(); ++t) {
    const auto tri = mesh.triangles.col(t);
    Eigen::Vector2d lo = mesh.uvs.col(tri(0)), hi = lo;
    for (int k = 1; k < 3; ++k) {
      lo = lo.cwiseMin(mesh.uvs.col(tri(k)));
      hi = hi.cwiseMax(mesh.uvs.col(tri(k)));
    }
    const int c0 = std::clamp(static_cast<int>(std::floor(lo.x() * grid - 0.5)), 0, grid - 1);
    const int c1 = std::clamp(static_cast<int>(std::ceil(hi.x() * grid - 0.5)), 0, grid - 1);
    const int r0 = std::clamp(static_cast<int>(std::floor(lo.y() * grid - 0.5)), 0, grid - 1);
    const int r1 = std::clamp(static_cast<int>(std::ceil(hi.y() * grid - 0.5)), 0, grid - 1);
    const int base = mesh.triangle_charts(t) * grid * grid;
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        buckets[static_cast<std::size_t>(base + r * grid + c)].push_back(static_cast<int>(t));
      }
    }
  }
  std::vector<TexelSample> samples;
  for (int id = 0; id < mesh.texel_count(); ++id) {
    const Eigen::Vector2d p = mesh.texel_uv(id);
    for (int t : buckets[static_cast<std::size_t>(id)]) {
      const auto tri = mesh.triangles.col(t);
      const Eigen::Vector2d a = mesh.uvs.col(tri(0));
      const Eigen::Vector2d e1 = mesh.uvs.col(tri(1)) - a;
      const Eigen::Vector2d e2 = mesh.uvs.col(tri(2)) - a;
      const double det = e1.x() * e2.y() - e2.x() * e1.y();
      if (std::abs(det) < 1e-300) continue;
      const Eigen::Vector2d d = p - a;
      const double w1 = (d.x() * e2.y() - e2.x() * d.y()) / det;
      const double w2 = (e1.x() * d.y() - d.x() * e1.y()) / det;
      const double w0 = 1.0 - w1 - w2;
      constexpr double kEdge = -1e-12;
      if (w0 >= kEdge && w1 >= kEdge && w2 >= kEdge) {
        samples.push_back({id, t, Eigen::Vector3d(w0, w1, w2)});
        break;
      }
    }
  }
  return samples;
}

namespace {

// dP/du and dP/dv of a triangle; returns false for a singular UV mapping.
bool uv_gradients(const BaseMesh& mesh, int triangle, Eigen::Vector3d& dpdu, Eigen::Vector3d& dpdv) {
  const auto tri = mesh.triangles.col(triangle);
  const Eigen::Vector3d e1 = mesh.vertices.col(tri(1)) - mesh.vertices.col(tri(0));
  const Eigen::Vector3d e2 = mesh.vertices.col(tri(2)) - mesh.vertices.col(tri(0));
  const Eigen::Vector2d d1 = mesh.uvs.col(tri(1)) - mesh.uvs.col(tri(0));
  const Eigen::Vector2d d2 = mesh.uvs.col(tri(2)) - mesh.uvs.col(tri(0));
  const double det = d1.x() * d2.y() - d2.x() * d1.y();
  if (!(std::abs(det) > 1e-300)) return false;
  dpdu = (e1 * d2.y() - e2 * d1.y()) / det;
  dpdv = (e2 * d1.x() - e1 * d2.x()) / det;
  return true;
}

}  // namespace

std::vector<TexelFrame> texel_frames(const BaseMesh& posed, std::span<const TexelSample> samples) {
  std::vector<TexelFrame> frames;
  frames.reserve(samples.size());
  std::vector<int> degenerate;
  for (const TexelSample& s : samples) {
    const auto tri = posed.triangles.col(s.triangle);
    TexelFrame frame;
    frame.texel_id = s.texel_id;
    Eigen::Vector3d n = Eigen::Vector3d::Zero();
    for (int k = 0; k < 3; ++k) {
      frame.position += s.barycentric(k) * posed.vertices.col(tri(k));
      n += s.barycentric(k) * posed.normals.col(tri(k));
    }
    Eigen::Vector3d dpdu, dpdv;
    const double n_norm = n.norm();
    if (!uv_gradients(posed, s.triangle, dpdu, dpdv) || !(n_norm > 1e-12)) {
      degenerate.push_back(s.texel_id);
      continue;
    }
    n /= n_norm;
    Eigen::Vector3d t = dpdu - dpdu.dot(n) * n;
    const double t_norm = t.norm();
    if (!(t_norm > 1e-9 * std::max(dpdu.norm(), 1e-300)) || !(t_norm > 1e-300)) {
      degenerate.push_back(s.texel_id);
      continue;
    }
    t /= t_norm;
    frame.tbn << t, n.cross(t), n;
    frames.push_back(frame);
  }
  if (!degenerate.empty()) {
    std::ostringstream msg;
    msg << "singular UV mapping at texels";
    for (int id : degenerate) msg << ' ' << id;
    fail(ErrorCode::kDegenerateTexel, msg.str());
  }
  return frames;
}

std::vector<TexelFrame> texel_frames(const BaseMesh& mesh, const Pose& pose) {
  const std::vector<TexelSample> samples = bind_texels(mesh);
  return texel_frames(pose_mesh(mesh, pose), samples);
}

std::vector<Eigen::Vector2d> texel_extents(const BaseMesh& mesh, std::span<const TexelSample> samples) {
  std::vector<Eigen::Vector2d> out;
  out.reserve(samples.size());
  for (const TexelSample& s : samples) {
    Eigen::Vector3d dpdu, dpdv;
    if (!uv_gradients(mesh, s.triangle, dpdu, dpdv)) {
      out.emplace_back(0.0, 0.0);
      continue;
    }
    out.emplace_back(dpdu.norm() / mesh.texel_grid, dpdv.norm() / mesh.texel_grid);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Primitives

void reset_appearance(GaussianPrimitive& p) {
  p.albedo = Eigen::Vector3d::Constant(0.5);
  p.transport = ZhLobes<double>{};
  for (int lobe = 0; lobe < 3; ++lobe) {
    for (int c = 0; c < 3; ++c) p.transport.at(lobe, c, 0) = 1.0 / 3.0;
  }
  p.normal_offset.setZero();
  p.specular_visibility = 0.1;
  p.roughness = 0.1;
}

std::vector<GaussianPrimitive> seed_primitives(const ToyRig& rig, double coverage) {
  const std::vector<Eigen::Vector2d> extents = texel_extents(rig.mesh, rig.texels);
  std::vector<GaussianPrimitive> out;
  out.reserve(rig.texels.size());
  for (std::size_t i = 0; i < rig.texels.size(); ++i) {
    GaussianPrimitive p;
    p.texel_id = rig.texels[i].texel_id;
    const Eigen::Vector2d e = extents[i].cwiseMax(1e-6);
    p.scale = Eigen::Vector3d(coverage * e.x(), coverage * e.y(), 0.25 * e.minCoeff());
    p.opacity = 0.95;
    reset_appearance(p);
    out.push_back(p);
  }
  return out;
}

PosedPrimitives pose_primitives(const std::vector<GaussianPrimitive>& primitives, const ToyRig& rig,
                                const Pose& pose) {
  const std::vector<TexelFrame> frames = texel_frames(pose_mesh(rig.mesh, pose), rig.texels);
  const std::vector<TexelFrame> rest = pose.is_identity()
                                           ? frames
                                           : texel_frames(rig.mesh, std::span(rig.texels));
  std::vector<int> lookup(static_cast<std::size_t>(rig.mesh.texel_count()), -1);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    lookup[static_cast<std::size_t>(frames[i].texel_id)] = static_cast<int>(i);
  }
  PosedPrimitives out;
  const std::size_t n = primitives.size();
  out.means.resize(n);
  out.rotations.resize(n);
  out.rest_rotations.resize(n);
  out.covariances.resize(n);
  out.mesh_normals.resize(n);
  out.opacities.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const GaussianPrimitive& p = primitives[k];
    if (p.texel_id < 0 || p.texel_id >= rig.mesh.texel_count() ||
        lookup[static_cast<std::size_t>(p.texel_id)] < 0) {
      fail(ErrorCode::kInvalidArgument, "primitive bound to unoccupied texel " +
                                            std::to_string(p.texel_id));
    }
    const auto f = static_cast<std::size_t>(lookup[static_cast<std::size_t>(p.texel_id)]);
    const WorldPlacement placed = world_from_local(frames[f], p.offset, p.local_rotation);
    out.means[k] = placed.translation;
    out.rotations[k] = placed.rotation_matrix();
    out.rest_rotations[k] = world_from_local(rest[f], p.offset, p.local_rotation).rotation_matrix();
    out.covariances[k] = covariance(out.rotations[k], p.scale);
    out.mesh_normals[k] = frames[f].tbn.col(2);
    out.opacities[k] = p.opacity;
  }
  return out;
}

}  // namespace prt
