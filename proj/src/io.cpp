#include "prt/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <initializer_list>
#include <sstream>

namespace prt {

static_assert(std::endian::native == std::endian::little, "sidecar files assume a little-endian host");

namespace {

[[noreturn]] void malformed(const fs::path& path, const std::string& what) {
  fail(ErrorCode::kMalformedInput, path.string() + ": " + what);
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) malformed(path, "cannot open");
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kInvalidArgument, path.string() + ": cannot write");
  return out;
}

// Runs a JSON decoder and turns library errors into malformed-input.
template <typename F>
auto decode(const char* what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kMalformedInput, std::string(what) + ": " + e.what());
  }
}

void check_keys(const Json& j, const char* what, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(ErrorCode::kMalformedInput, std::string(what) + ": expected an object");
  for (const auto& item : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; })) {
      fail(ErrorCode::kMalformedInput, std::string(what) + ": unknown key '" + item.key() + "'");
    }
  }
}

template <typename T>
void read_opt(const Json& j, const char* key, T& value) {
  if (j.contains(key)) value = j.at(key).get<T>();
}

Json vec(const Eigen::Vector3d& v) { return Json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec3(const Json& j) {
  if (!j.is_array() || j.size() != 3) fail(ErrorCode::kMalformedInput, "expected a 3-vector");
  return Eigen::Vector3d(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

void read_vec(const Json& j, const char* key, Eigen::Vector3d& v) {
  if (j.contains(key)) v = vec3(j.at(key));
}

Json limits(const JointLimits& l) { return Json::array({l.min_deg, l.max_deg}); }

void read_limits(const Json& j, const char* key, JointLimits& l) {
  if (!j.contains(key)) return;
  const Json& a = j.at(key);
  if (!a.is_array() || a.size() != 2) fail(ErrorCode::kMalformedInput, std::string(key) + ": expected [min, max]");
  l = {a[0].get<double>(), a[1].get<double>()};
}

Json range(const Range& r) { return Json::array({r.lb, r.ub}); }

void read_range(const Json& j, const char* key, Range& r) {
  if (!j.contains(key)) return;
  const Json& a = j.at(key);
  if (!a.is_array() || a.size() != 2) fail(ErrorCode::kMalformedInput, std::string(key) + ": expected [lb, ub]");
  r = {a[0].get<double>(), a[1].get<double>()};
}

// ---------------------------------------------------------------------------
// PFM

template <int C>
void write_pfm_impl(const fs::path& path, const Image<C>& image) {
  std::ofstream out = open_out(path);
  out << (C == 3 ? "PF" : "Pf") << '\n' << image.width() << ' ' << image.height() << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(image.width()) * C);
  for (int y = image.height() - 1; y >= 0; --y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < C; ++c) row[static_cast<std::size_t>(x) * C + c] = static_cast<float>(image.pixel(x, y)(c));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) fail(ErrorCode::kInvalidArgument, path.string() + ": write failed");
}

template <int C>
Image<C> read_pfm_impl(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  if (!in || magic != (C == 3 ? "PF" : "Pf")) malformed(path, "not a " + std::to_string(C) + "-channel PFM");
  if (w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16) || scale == 0.0) malformed(path, "bad PFM header");
  in.get();  // single whitespace byte before the raster
  Image<C> image(w, h);
  std::vector<float> row(static_cast<std::size_t>(w) * C);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(row.size() * sizeof(float))) malformed(path, "truncated PFM");
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < C; ++c) {
        float v = row[static_cast<std::size_t>(x) * C + c];
        if (scale > 0.0) v = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(v)));
        image.pixel(x, y)(c) = v;
      }
    }
  }
  return image;
}

// ---------------------------------------------------------------------------
// Raw float64 sidecars

fs::path sidecar_path(const fs::path& header) {
  fs::path p = header;
  p.replace_extension(".bin");
  return p;
}

void write_doubles(std::ofstream& out, const double* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
}

std::vector<char> read_all(const fs::path& path) {
  std::ifstream in = open_in(path);
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

constexpr int kRecordSize = 1 + 3 + 4 + 3 + 1 + 3 + ZhLobes<double>::kSize + 3 + 1 + 1;

void write_record(std::vector<double>& r, const GaussianPrimitive& p) {
  r.push_back(static_cast<double>(p.texel_id));
  for (int i = 0; i < 3; ++i) r.push_back(p.offset(i));
  r.push_back(p.local_rotation.w());
  r.push_back(p.local_rotation.x());
  r.push_back(p.local_rotation.y());
  r.push_back(p.local_rotation.z());
  for (int i = 0; i < 3; ++i) r.push_back(p.scale(i));
  r.push_back(p.opacity);
  for (int i = 0; i < 3; ++i) r.push_back(p.albedo(i));
  for (int i = 0; i < ZhLobes<double>::kSize; ++i) r.push_back(p.transport.values(i));
  for (int i = 0; i < 3; ++i) r.push_back(p.normal_offset(i));
  r.push_back(p.specular_visibility);
  r.push_back(p.roughness);
}

GaussianPrimitive read_record(const double* r) {
  GaussianPrimitive p;
  p.texel_id = static_cast<int>(*r++);
  for (int i = 0; i < 3; ++i) p.offset(i) = *r++;
  p.local_rotation.w() = *r++;
  p.local_rotation.x() = *r++;
  p.local_rotation.y() = *r++;
  p.local_rotation.z() = *r++;
  for (int i = 0; i < 3; ++i) p.scale(i) = *r++;
  p.opacity = *r++;
  for (int i = 0; i < 3; ++i) p.albedo(i) = *r++;
  for (int i = 0; i < ZhLobes<double>::kSize; ++i) p.transport.values(i) = *r++;
  for (int i = 0; i < 3; ++i) p.normal_offset(i) = *r++;
  p.specular_visibility = *r++;
  p.roughness = *r++;
  return p;
}

// ---------------------------------------------------------------------------
// sRGB

double srgb_encode(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

double srgb_decode(double e) {
  return e <= 0.04045 ? e / 12.92 : std::pow((e + 0.055) / 1.055, 2.4);
}

const char* const kTraceColumns[] = {"step",   "rec",           "scale",          "offset", "mask",   "normal",
                                     "normal_orient", "alpha_sparsity", "bound",  "albedo", "neg_color", "total"};

}  // namespace

void write_pfm(const fs::path& path, const Image3& image) { write_pfm_impl(path, image); }
void write_pfm(const fs::path& path, const Image1& image) { write_pfm_impl(path, image); }
Image3 read_pfm3(const fs::path& path) { return read_pfm_impl<3>(path); }
Image1 read_pfm1(const fs::path& path) { return read_pfm_impl<1>(path); }

void write_png(const fs::path& path, const Image3& image, double exposure) {
  std::vector<unsigned char> bytes(static_cast<std::size_t>(image.size()) * 3);
  for (Eigen::Index p = 0; p < image.size(); ++p) {
    for (int c = 0; c < 3; ++c) {
      bytes[static_cast<std::size_t>(p) * 3 + c] =
          static_cast<unsigned char>(std::lround(255.0 * srgb_encode(exposure * image.data()(c, p))));
    }
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    fail(ErrorCode::kInvalidArgument, path.string() + ": " + png.message);
  }
}

Image3 read_png(const fs::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) malformed(path, png.message);
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) malformed(path, png.message);
  Image3 image(static_cast<int>(png.width), static_cast<int>(png.height));
  for (Eigen::Index p = 0; p < image.size(); ++p) {
    for (int c = 0; c < 3; ++c) image.data()(c, p) = srgb_decode(bytes[static_cast<std::size_t>(p) * 3 + c] / 255.0);
  }
  return image;
}

Json load_json(const fs::path& path) {
  std::ifstream in = open_in(path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    malformed(path, e.what());
  }
}

void save_json(const fs::path& path, const Json& doc) {
  std::ofstream out = open_out(path);
  out << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Rig, cameras, lights, poses

Json to_json(const RigSpec& s) {
  Json j;
  j["kind"] = s.kind == RigKind::kArm ? "arm" : "head";
  j["texel_grid"] = s.texel_grid;
  j["segments"] = s.segments;
  j["cap_rings"] = s.cap_rings;
  j["body_rings"] = s.body_rings;
  j["torso_size"] = vec(s.torso_size);
  j["shoulder"] = vec(s.shoulder);
  j["upper_arm_length"] = s.upper_arm_length;
  j["upper_arm_radius"] = s.upper_arm_radius;
  j["forearm_length"] = s.forearm_length;
  j["forearm_radius"] = s.forearm_radius;
  j["shoulder_limits"] = limits(s.shoulder_limits);
  j["elbow_limits"] = limits(s.elbow_limits);
  j["plate_size"] = vec(s.plate_size);
  j["head_radius"] = s.head_radius;
  j["neck_height"] = s.neck_height;
  j["neck_limits"] = limits(s.neck_limits);
  return j;
}

RigSpec rig_spec_from_json(const Json& j) {
  return decode("rig", [&] {
    check_keys(j, "rig",
               {"kind", "texel_grid", "segments", "cap_rings", "body_rings", "torso_size", "shoulder",
                "upper_arm_length", "upper_arm_radius", "forearm_length", "forearm_radius", "shoulder_limits",
                "elbow_limits", "plate_size", "head_radius", "neck_height", "neck_limits"});
    RigSpec s;
    if (j.contains("kind")) {
      const std::string kind = j.at("kind").get<std::string>();
      if (kind == "arm") {
        s.kind = RigKind::kArm;
      } else if (kind == "head") {
        s.kind = RigKind::kHead;
      } else {
        fail(ErrorCode::kMalformedInput, "rig: unknown kind '" + kind + "'");
      }
    }
    read_opt(j, "texel_grid", s.texel_grid);
    read_opt(j, "segments", s.segments);
    read_opt(j, "cap_rings", s.cap_rings);
    read_opt(j, "body_rings", s.body_rings);
    read_vec(j, "torso_size", s.torso_size);
    read_vec(j, "shoulder", s.shoulder);
    read_opt(j, "upper_arm_length", s.upper_arm_length);
    read_opt(j, "upper_arm_radius", s.upper_arm_radius);
    read_opt(j, "forearm_length", s.forearm_length);
    read_opt(j, "forearm_radius", s.forearm_radius);
    read_limits(j, "shoulder_limits", s.shoulder_limits);
    read_limits(j, "elbow_limits", s.elbow_limits);
    read_vec(j, "plate_size", s.plate_size);
    read_opt(j, "head_radius", s.head_radius);
    read_opt(j, "neck_height", s.neck_height);
    read_limits(j, "neck_limits", s.neck_limits);
    return s;
  });
}

Json to_json(const Camera& cam) {
  Json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  Json m = Json::array();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m.push_back(cam.world_to_camera.matrix()(r, c));
  }
  j["world_to_camera"] = m;
  return j;
}

Camera camera_from_json(const Json& j) {
  const Camera cam = decode("camera", [&] {
    if (j.contains("look_at")) {
      check_keys(j, "camera", {"look_at"});
      const Json& l = j.at("look_at");
      check_keys(l, "camera look_at", {"eye", "target", "up", "fov_y_deg", "width", "height"});
      const Eigen::Vector3d up = l.contains("up") ? vec3(l.at("up")) : Eigen::Vector3d::UnitZ();
      return Camera::look_at(vec3(l.at("eye")), vec3(l.at("target")), up, l.at("fov_y_deg").get<double>(),
                             l.at("width").get<int>(), l.at("height").get<int>());
    }
    check_keys(j, "camera", {"fx", "fy", "cx", "cy", "width", "height", "world_to_camera"});
    Camera c;
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    const Json& m = j.at("world_to_camera");
    if (!m.is_array() || m.size() != 16) fail(ErrorCode::kMalformedInput, "camera: world_to_camera needs 16 values");
    for (int r = 0; r < 4; ++r) {
      for (int k = 0; k < 4; ++k) c.world_to_camera.matrix()(r, k) = m[static_cast<std::size_t>(4 * r + k)].get<double>();
    }
    return c;
  });
  try {
    check_camera(cam);
  } catch (const Error& e) {
    fail(ErrorCode::kMalformedInput, std::string("camera: ") + e.what());
  }
  return cam;
}

std::vector<Camera> cameras_from_json(const Json& j) {
  const Json& list = j.is_object() && j.contains("cameras") ? j.at("cameras") : j;
  std::vector<Camera> out;
  if (list.is_array()) {
    for (const Json& c : list) out.push_back(camera_from_json(c));
  } else {
    out.push_back(camera_from_json(list));
  }
  if (out.empty()) fail(ErrorCode::kMalformedInput, "cameras: empty list");
  return out;
}

Json cameras_to_json(const std::vector<Camera>& cams) {
  Json list = Json::array();
  for (const Camera& c : cams) list.push_back(to_json(c));
  return Json{{"cameras", list}};
}

Json to_json(const LightRig& rig) {
  Json j;
  j["radius"] = rig.radius;
  Json lights = Json::array();
  for (const PointLight& l : rig.lights) lights.push_back({{"position", vec(l.position)}, {"intensity", vec(l.intensity)}});
  j["lights"] = lights;
  if (!rig.active.empty()) {
    Json active = Json::array();
    for (bool a : rig.active) active.push_back(a);
    j["active"] = active;
  }
  return j;
}

LightRig light_rig_from_json(const Json& j) {
  return decode("lights", [&] {
    check_keys(j, "lights", {"radius", "lights", "active"});
    LightRig rig;
    read_opt(j, "radius", rig.radius);
    for (const Json& l : j.at("lights")) {
      check_keys(l, "light", {"position", "intensity"});
      PointLight p;
      p.position = vec3(l.at("position"));
      if (l.contains("intensity")) p.intensity = vec3(l.at("intensity"));
      if (!(p.position.norm() > 0.0)) fail(ErrorCode::kMalformedInput, "lights: light at the origin");
      if ((p.intensity.array() < 0.0).any()) fail(ErrorCode::kMalformedInput, "lights: negative intensity");
      rig.lights.push_back(p);
    }
    if (j.contains("active")) {
      for (const Json& a : j.at("active")) rig.active.push_back(a.get<bool>());
      if (rig.active.size() != rig.lights.size()) fail(ErrorCode::kMalformedInput, "lights: active mask length");
    }
    return rig;
  });
}

Json pose_to_json(const std::vector<double>& angles_deg) { return Json{{"angles_deg", angles_deg}}; }

std::vector<double> pose_from_json(const Json& j) {
  return decode("pose", [&] {
    check_keys(j, "pose", {"angles_deg"});
    return j.at("angles_deg").get<std::vector<double>>();
  });
}

// ---------------------------------------------------------------------------
// Shading and fitting configs

Json to_json(const ShadingConfig& c) {
  Json j;
  j["diffuse_basis"] = c.diffuse_basis == TransportBasis::kZh ? "zh" : "sh";
  j["deferred"] = c.deferred;
  j["shadow"] = c.shadow;
  j["normal"] = c.normal == NormalSource::kGaussian ? "gaussian" : "mesh";
  j["sg"] = c.sg == SgNormalization::kPrinted ? "printed" : "gaussian";
  j["alpha_threshold"] = c.alpha_threshold;
  return j;
}

namespace {

void set_enum(ShadingConfig& c, const std::string& key, const std::string& value) {
  auto bad = [&]() { fail(ErrorCode::kMalformedInput, "config: bad value '" + value + "' for " + key); };
  auto on_off = [&](bool& b) {
    if (value == "on" || value == "true") {
      b = true;
    } else if (value == "off" || value == "false") {
      b = false;
    } else {
      bad();
    }
  };
  if (key == "diffuse_basis") {
    if (value == "zh") {
      c.diffuse_basis = TransportBasis::kZh;
    } else if (value == "sh") {
      c.diffuse_basis = TransportBasis::kSh;
    } else {
      bad();
    }
  } else if (key == "deferred") {
    on_off(c.deferred);
  } else if (key == "shadow") {
    on_off(c.shadow);
  } else if (key == "normal") {
    if (value == "gaussian") {
      c.normal = NormalSource::kGaussian;
    } else if (value == "mesh") {
      c.normal = NormalSource::kMesh;
    } else {
      bad();
    }
  } else if (key == "sg") {
    if (value == "printed") {
      c.sg = SgNormalization::kPrinted;
    } else if (value == "gaussian") {
      c.sg = SgNormalization::kGaussian;
    } else {
      bad();
    }
  } else {
    fail(ErrorCode::kMalformedInput, "config: unknown flag '" + key + "'");
  }
}

}  // namespace

ShadingConfig shading_config_from_json(const Json& j) {
  return decode("config", [&] {
    check_keys(j, "config", {"diffuse_basis", "deferred", "shadow", "normal", "sg", "alpha_threshold"});
    ShadingConfig c;
    for (const char* key : {"diffuse_basis", "normal", "sg"}) {
      if (j.contains(key)) set_enum(c, key, j.at(key).get<std::string>());
    }
    read_opt(j, "deferred", c.deferred);
    read_opt(j, "shadow", c.shadow);
    read_opt(j, "alpha_threshold", c.alpha_threshold);
    return c;
  });
}

void apply_flag(ShadingConfig& config, const std::string& flag) {
  const auto eq = flag.find('=');
  if (eq == std::string::npos) fail(ErrorCode::kMalformedInput, "flag '" + flag + "' is not key=value");
  set_enum(config, flag.substr(0, eq), flag.substr(eq + 1));
}

Json to_json(const LossWeights& w) {
  return Json{{"lpips", w.lpips},
              {"scale", w.scale},
              {"offset", w.offset},
              {"mask", w.mask},
              {"normal", w.normal},
              {"normal_anneal_steps", w.normal_anneal_steps},
              {"normal_orient", w.normal_orient},
              {"alpha_sparsity", w.alpha_sparsity},
              {"bound", w.bound},
              {"albedo", w.albedo},
              {"neg_color", w.neg_color}};
}

LossWeights loss_weights_from_json(const Json& j) {
  return decode("weights", [&] {
    check_keys(j, "weights",
               {"lpips", "scale", "offset", "mask", "normal", "normal_anneal_steps", "normal_orient",
                "alpha_sparsity", "bound", "albedo", "neg_color"});
    LossWeights w;
    read_opt(j, "lpips", w.lpips);
    read_opt(j, "scale", w.scale);
    read_opt(j, "offset", w.offset);
    read_opt(j, "mask", w.mask);
    read_opt(j, "normal", w.normal);
    read_opt(j, "normal_anneal_steps", w.normal_anneal_steps);
    read_opt(j, "normal_orient", w.normal_orient);
    read_opt(j, "alpha_sparsity", w.alpha_sparsity);
    read_opt(j, "bound", w.bound);
    read_opt(j, "albedo", w.albedo);
    read_opt(j, "neg_color", w.neg_color);
    return w;
  });
}

Json to_json(const FitOptions& o) {
  Json j;
  j["steps"] = o.steps;
  j["adam"] = {{"lr", o.adam.lr}, {"beta1", o.adam.beta1}, {"beta2", o.adam.beta2}, {"epsilon", o.adam.epsilon}};
  j["weights"] = to_json(o.weights);
  j["bounds"] = {{"scale", range(o.bounds.scale)}, {"roughness", range(o.bounds.roughness)}};
  j["optimize_roughness"] = o.optimize_roughness;
  j["batch"] = o.batch;
  j["seed"] = o.seed;
  j["config"] = to_json(o.config);
  return j;
}

FitOptions fit_options_from_json(const Json& j) {
  return decode("fit", [&] {
    check_keys(j, "fit", {"steps", "adam", "weights", "bounds", "optimize_roughness", "batch", "seed", "config"});
    FitOptions o;
    read_opt(j, "steps", o.steps);
    if (j.contains("adam")) {
      const Json& a = j.at("adam");
      check_keys(a, "adam", {"lr", "beta1", "beta2", "epsilon"});
      read_opt(a, "lr", o.adam.lr);
      read_opt(a, "beta1", o.adam.beta1);
      read_opt(a, "beta2", o.adam.beta2);
      read_opt(a, "epsilon", o.adam.epsilon);
    }
    if (j.contains("weights")) o.weights = loss_weights_from_json(j.at("weights"));
    if (j.contains("bounds")) {
      const Json& b = j.at("bounds");
      check_keys(b, "bounds", {"scale", "roughness"});
      read_range(b, "scale", o.bounds.scale);
      read_range(b, "roughness", o.bounds.roughness);
    }
    read_opt(j, "optimize_roughness", o.optimize_roughness);
    read_opt(j, "batch", o.batch);
    read_opt(j, "seed", o.seed);
    if (j.contains("config")) o.config = shading_config_from_json(j.at("config"));
    if (o.steps < 0) fail(ErrorCode::kMalformedInput, "fit: negative step count");
    return o;
  });
}

Json to_json(const RoundTripSpec& s) {
  Json j;
  j["rig"] = to_json(s.rig);
  j["scene_seed"] = s.scene_seed;
  j["train_poses"] = s.train_poses;
  j["heldout_pose"] = s.heldout_pose;
  j["dome_lights"] = s.dome_lights;
  j["train_lightings"] = s.train_lightings;
  j["heldout_lightings"] = s.heldout_lightings;
  j["min_on"] = s.min_on;
  j["max_on"] = s.max_on;
  j["light_seed"] = s.light_seed;
  j["radiance"] = s.radiance;
  j["azimuths"] = s.azimuths;
  j["image_size"] = s.image_size;
  j["config"] = to_json(s.config);
  return j;
}

RoundTripSpec round_trip_spec_from_json(const Json& j) {
  return decode("experiment", [&] {
    check_keys(j, "experiment",
               {"rig", "scene_seed", "train_poses", "heldout_pose", "dome_lights", "train_lightings",
                "heldout_lightings", "min_on", "max_on", "light_seed", "radiance", "azimuths", "image_size",
                "config"});
    RoundTripSpec s;
    if (j.contains("rig")) s.rig = rig_spec_from_json(j.at("rig"));
    read_opt(j, "scene_seed", s.scene_seed);
    read_opt(j, "train_poses", s.train_poses);
    read_opt(j, "heldout_pose", s.heldout_pose);
    read_opt(j, "dome_lights", s.dome_lights);
    read_opt(j, "train_lightings", s.train_lightings);
    read_opt(j, "heldout_lightings", s.heldout_lightings);
    read_opt(j, "min_on", s.min_on);
    read_opt(j, "max_on", s.max_on);
    read_opt(j, "light_seed", s.light_seed);
    read_opt(j, "radiance", s.radiance);
    read_opt(j, "azimuths", s.azimuths);
    read_opt(j, "image_size", s.image_size);
    if (j.contains("config")) s.config = shading_config_from_json(j.at("config"));
    if (s.train_poses.empty()) fail(ErrorCode::kMalformedInput, "experiment: no training pose");
    if (s.min_on < 1 || s.max_on < s.min_on || s.max_on > s.dome_lights) {
      fail(ErrorCode::kMalformedInput, "experiment: bad light subset range");
    }
    return s;
  });
}

// ---------------------------------------------------------------------------
// Scenes and maps

void write_scene(const fs::path& path, const Scene& scene) {
  const bool sh = !scene.sh_transport.empty();
  if (sh && scene.sh_transport.size() != scene.primitives.size()) {
    fail(ErrorCode::kInvalidArgument, "SH transport count differs from the primitive count");
  }
  const fs::path bin = sidecar_path(path);
  Json j;
  j["format"] = "prt-scene";
  j["version"] = 1;
  j["rig"] = to_json(scene.rig);
  j["pose_deg"] = scene.pose_deg;
  j["primitives"] = scene.primitives.size();
  j["record_doubles"] = kRecordSize;
  j["sh_transport"] = sh;
  j["sidecar"] = bin.filename().string();
  save_json(path, j);

  std::vector<double> data;
  data.reserve(scene.primitives.size() * (kRecordSize + (sh ? ShTransport<double>::kSize : 0)));
  for (const GaussianPrimitive& p : scene.primitives) write_record(data, p);
  for (const ShTransport<double>& t : scene.sh_transport) data.insert(data.end(), t.values.data(), t.values.data() + t.values.size());
  std::ofstream out = open_out(bin);
  write_doubles(out, data.data(), data.size());
}

Scene read_scene(const fs::path& path) {
  const Json j = load_json(path);
  Scene scene;
  std::size_t count = 0;
  bool sh = false;
  std::string sidecar;
  decode("scene", [&] {
    check_keys(j, "scene", {"format", "version", "rig", "pose_deg", "primitives", "record_doubles", "sh_transport", "sidecar"});
    if (j.at("format") != "prt-scene" || j.at("version") != 1) fail(ErrorCode::kMalformedInput, "scene: unsupported format");
    if (j.at("record_doubles") != kRecordSize) fail(ErrorCode::kMalformedInput, "scene: record size mismatch");
    scene.rig = rig_spec_from_json(j.at("rig"));
    scene.pose_deg = j.at("pose_deg").get<std::vector<double>>();
    count = j.at("primitives").get<std::size_t>();
    sh = j.at("sh_transport").get<bool>();
    sidecar = j.at("sidecar").get<std::string>();
    return 0;
  });
  const fs::path bin = path.parent_path() / sidecar;
  const std::vector<char> bytes = read_all(bin);
  const std::size_t per = kRecordSize + (sh ? ShTransport<double>::kSize : 0);
  if (bytes.size() != count * per * sizeof(double)) malformed(bin, "sidecar size does not match the header");
  std::vector<double> data(count * per);
  std::memcpy(data.data(), bytes.data(), bytes.size());
  for (std::size_t k = 0; k < count; ++k) scene.primitives.push_back(read_record(data.data() + k * kRecordSize));
  if (sh) {
    const double* t = data.data() + count * kRecordSize;
    scene.sh_transport.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
      std::memcpy(scene.sh_transport[k].values.data(), t + k * ShTransport<double>::kSize,
                  ShTransport<double>::kSize * sizeof(double));
    }
  }
  return scene;
}

void write_irradiance_map(const fs::path& path, const IrradianceMap& map) {
  const fs::path bin = sidecar_path(path);
  Json j;
  j["format"] = "prt-irradiance";
  j["version"] = 1;
  j["grid"] = map.grid;
  j["charts"] = map.charts;
  j["samples"] = map.samples;
  j["seed"] = map.seed;
  j["sidecar"] = bin.filename().string();
  save_json(path, j);
  std::ofstream out = open_out(bin);
  write_doubles(out, map.values.data(), static_cast<std::size_t>(map.values.size()));
  std::vector<char> occupied(map.occupied.size());
  for (std::size_t i = 0; i < occupied.size(); ++i) occupied[i] = map.occupied[i] ? 1 : 0;
  out.write(occupied.data(), static_cast<std::streamsize>(occupied.size()));
}

IrradianceMap read_irradiance_map(const fs::path& path) {
  const Json j = load_json(path);
  IrradianceMap map;
  std::string sidecar;
  decode("irradiance map", [&] {
    check_keys(j, "irradiance map", {"format", "version", "grid", "charts", "samples", "seed", "sidecar"});
    if (j.at("format") != "prt-irradiance" || j.at("version") != 1) {
      fail(ErrorCode::kMalformedInput, "irradiance map: unsupported format");
    }
    map.grid = j.at("grid").get<int>();
    map.charts = j.at("charts").get<int>();
    map.samples = j.at("samples").get<int>();
    map.seed = j.at("seed").get<std::uint64_t>();
    sidecar = j.at("sidecar").get<std::string>();
    return 0;
  });
  if (map.grid <= 0 || map.charts <= 0) malformed(path, "bad map size");
  const std::size_t texels = static_cast<std::size_t>(map.grid) * map.grid * map.charts;
  const fs::path bin = path.parent_path() / sidecar;
  const std::vector<char> bytes = read_all(bin);
  if (bytes.size() != texels * (sizeof(double) + 1)) malformed(bin, "sidecar size does not match the header");
  map.values.resize(static_cast<Eigen::Index>(texels));
  std::memcpy(map.values.data(), bytes.data(), texels * sizeof(double));
  map.occupied.resize(texels);
  for (std::size_t i = 0; i < texels; ++i) map.occupied[i] = bytes[texels * sizeof(double) + i] != 0;
  return map;
}

Image1 irradiance_image(const IrradianceMap& map) {
  Image1 img(map.grid, map.grid * map.charts);
  for (Eigen::Index t = 0; t < map.values.size(); ++t) {
    if (map.occupied[static_cast<std::size_t>(t)]) img.data()(0, t) = map.values(t);
  }
  return img;
}

EnvironmentMap read_env_map(const fs::path& path) {
  EnvironmentMap env{read_pfm3(path)};
  if ((env.radiance.data().array() < 0.0).any() || !env.radiance.data().allFinite()) {
    malformed(path, "environment map needs finite non-negative radiance");
  }
  return env;
}

// ---------------------------------------------------------------------------
// Traces

void write_trace_csv(const fs::path& path, const std::vector<TraceRow>& trace) {
  std::ofstream out = open_out(path);
  for (std::size_t i = 0; i < std::size(kTraceColumns); ++i) out << (i ? "," : "") << kTraceColumns[i];
  out << '\n';
  char buf[32];
  for (const TraceRow& r : trace) {
    out << r.step;
    for (double v : {r.loss.rec, r.loss.scale, r.loss.offset, r.loss.mask, r.loss.normal, r.loss.normal_orient,
                     r.loss.alpha_sparsity, r.loss.bound, r.loss.albedo, r.loss.neg_color, r.loss.total}) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

std::vector<TraceRow> read_trace_csv(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::getline(in, line);
  std::string header;
  for (std::size_t i = 0; i < std::size(kTraceColumns); ++i) header += (i ? "," : "") + std::string(kTraceColumns[i]);
  if (line != header) malformed(path, "unexpected trace header");
  std::vector<TraceRow> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double d = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0') malformed(path, "bad number '" + cell + "'");
      v.push_back(d);
    }
    if (v.size() != std::size(kTraceColumns)) malformed(path, "wrong column count");
    TraceRow r;
    r.step = static_cast<int>(v[0]);
    LossBreakdown& l = r.loss;
    double* fields[] = {&l.rec,   &l.scale, &l.offset, &l.mask,      &l.normal, &l.normal_orient,
                        &l.alpha_sparsity, &l.bound, &l.albedo, &l.neg_color, &l.total};
    for (std::size_t i = 0; i < std::size(fields); ++i) *fields[i] = v[i + 1];
    out.push_back(r);
  }
  return out;
}

}  // namespace prt
