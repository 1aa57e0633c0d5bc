// prt: command-line driver for scene generation, rendering, relighting,
// irradiance precomputation, appearance fitting and oracle validation.
//
// Exit codes: 0 success, 2 validation failure, 3 malformed input.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "prt/io.hpp"
#include "prt/validation.hpp"

namespace {

using namespace prt;

constexpr int kValidationFailure = 2;
constexpr int kMalformed = 3;

// Options shared by the scene-consuming subcommands.
struct SceneArgs {
  std::string scene;
  std::string pose;
  std::string camera;
  std::string lights;
  std::vector<std::string> env;
  int spp = kFullEnumeration;
  std::uint64_t seed = 0;
  std::string out = ".";
  std::vector<std::string> flags;
  double exposure = 1.0;
  std::string irradiance;  // precomputed map used instead of tracing
};

void add_scene_options(CLI::App* app, SceneArgs& a, bool camera, bool multi_env = false) {
  app->add_option("--scene", a.scene, "Scene header (JSON)")->required();
  app->add_option("--pose", a.pose, "Pose JSON file or comma-separated angles in degrees");
  if (camera) app->add_option("--camera", a.camera, "Camera JSON (one camera or a list)")->required();
  app->add_option("--lights", a.lights, "Light rig JSON");
  auto* env = app->add_option("--env", a.env, "Lat-long environment map (PFM)");
  if (!multi_env) env->expected(0, 1);
  app->add_option("--spp", a.spp, "Irradiance samples per texel; 0 enumerates every light");
  app->add_option("--seed", a.seed, "Seed for irradiance sampling");
  app->add_option("--out", a.out, "Output directory");
  app->add_option("--flag", a.flags, "Shading switch key=value: diffuse_basis={zh,sh} deferred={on,off} "
                                     "shadow={on,off} normal={gaussian,mesh}");
  app->add_option("--exposure", a.exposure, "Scale applied to PNG previews");
}

ShadingConfig shading_config(const SceneArgs& a) {
  ShadingConfig c;
  for (const std::string& f : a.flags) apply_flag(c, f);
  return c;
}

std::vector<double> parse_pose(const std::string& text, const Scene& scene) {
  if (text.empty()) return scene.pose_deg;
  if (fs::exists(text)) return pose_from_json(load_json(text));
  std::vector<double> angles;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (end == item.c_str() || *end != '\0') fail(ErrorCode::kMalformedInput, "pose: bad angle '" + item + "'");
    angles.push_back(v);
  }
  return angles;
}

// A posed scene ready to render.
struct Loaded {
  Scene scene;
  ToyRig rig;
  Pose pose;
  PreparedScene prepared;
};

Loaded load_scene(const SceneArgs& a) {
  Loaded l;
  l.scene = read_scene(a.scene);
  l.rig = build_toy_rig(l.scene.rig);
  const std::vector<double> angles = parse_pose(a.pose, l.scene);
  if (angles.size() != l.rig.joint_count()) {
    fail(ErrorCode::kMalformedInput, "pose: expected " + std::to_string(l.rig.joint_count()) + " angles");
  }
  l.pose = pose_from_angles(l.rig, angles);
  l.prepared = prepare_scene(l.scene, l.rig, l.pose);
  return l;
}

// One lighting condition with its irradiance-estimator view.
struct LightSource {
  std::string name;
  Lighting lighting;
  IrradianceLights emitters;
};

LightSource point_source(const std::string& name, const LightRig& rig) {
  return {name, make_lighting(rig), irradiance_lights(rig)};
}

LightSource env_source(const std::string& path) {
  const EnvironmentMap env = read_env_map(path);
  return {fs::path(path).stem().string(), make_lighting(env), irradiance_lights(env)};
}

// Per-primitive shadow, or empty when shadows are off or nothing emits.
Eigen::VectorXd shadow_for(const Loaded& l, const LightSource& src, const ShadingConfig& config, const SceneArgs& a,
                           IrradianceMap* map_out = nullptr) {
  if (!config.shadow) return {};
  if (!a.irradiance.empty()) {
    const IrradianceMap map = read_irradiance_map(a.irradiance);
    if (map.grid != l.rig.mesh.texel_grid || map.charts != l.rig.mesh.chart_count) {
      fail(ErrorCode::kMalformedInput, "irradiance map does not match the scene's texel layout");
    }
    if (map_out) *map_out = map;
    return primitive_shadow(map, l.scene.primitives);
  }
  if (src.emitters.power.sum() <= 0.0) return {};
  const IrradianceMap map = irradiance_uv_map(l.rig, l.pose, src.emitters, a.spp, a.seed);
  if (map_out) *map_out = map;
  return primitive_shadow(map, l.scene.primitives);
}

void write_outputs(const fs::path& dir, const std::string& stem, const RenderResult& r, double exposure, bool gbuffer) {
  write_pfm(dir / (stem + ".pfm"), r.color);
  write_png(dir / (stem + ".png"), r.color, exposure);
  if (!gbuffer) return;
  write_pfm(dir / (stem + "_diffuse.pfm"), r.diffuse);
  write_pfm(dir / (stem + "_specular.pfm"), r.specular);
  write_pfm(dir / (stem + "_normal.pfm"), r.gbuffer.normal);
  write_pfm(dir / (stem + "_depth.pfm"), r.gbuffer.depth);
  write_pfm(dir / (stem + "_alpha.pfm"), r.gbuffer.alpha);
  write_pfm(dir / (stem + "_roughness.pfm"), r.gbuffer.roughness);
  write_pfm(dir / (stem + "_visibility.pfm"), r.gbuffer.visibility);
  write_pfm(dir / (stem + "_shadow.pfm"), r.gbuffer.shadow);
}

std::string indexed(const std::string& prefix, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%03zu", prefix.c_str(), i);
  return buf;
}

LightSource single_source(const SceneArgs& a) {
  if (a.lights.empty() == a.env.empty()) fail(ErrorCode::kMalformedInput, "give exactly one of --lights and --env");
  if (!a.env.empty()) return env_source(a.env.front());
  return point_source("lights", light_rig_from_json(load_json(a.lights)));
}

// ---------------------------------------------------------------------------

int cmd_gen_scene(const std::string& rig_kind, const std::string& rig_config, int texel_grid, std::uint64_t seed,
                  int lights, double radiance, int image_size, const std::string& out) {
  RigSpec spec;
  if (!rig_config.empty()) {
    spec = rig_spec_from_json(load_json(rig_config));
  } else if (rig_kind == "head") {
    spec.kind = RigKind::kHead;
  } else if (rig_kind != "arm") {
    fail(ErrorCode::kMalformedInput, "unknown rig '" + rig_kind + "'");
  }
  if (texel_grid > 0) spec.texel_grid = texel_grid;
  if (lights < 1) fail(ErrorCode::kMalformedInput, "the dome needs at least one light");
  const fs::path dir(out);
  fs::create_directories(dir);
  const Scene scene = generate_scene(spec, seed);
  write_scene(dir / "scene.json", scene);
  // All lights on approximate a constant environment of radiance `radiance`.
  const double each = 4.0 * M_PI * radiance / lights;
  save_json(dir / "lights.json", to_json(make_dome_rig(lights, 2.75, Eigen::Vector3d::Constant(each))));
  const std::vector<double> azimuths{-30.0, 0.0, 30.0};
  save_json(dir / "cameras.json", cameras_to_json(rig_cameras(spec, azimuths, image_size)));
  save_json(dir / "pose.json", pose_to_json(scene.pose_deg));
  std::cout << "wrote " << scene.primitives.size() << " primitives to " << dir.string() << '\n';
  return 0;
}

int cmd_render(const SceneArgs& a) {
  const ShadingConfig config = shading_config(a);
  const Loaded l = load_scene(a);
  const std::vector<Camera> cams = cameras_from_json(load_json(a.camera));
  const LightSource src = single_source(a);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  IrradianceMap map;
  const Eigen::VectorXd shadow = shadow_for(l, src, config, a, &map);
  if (shadow.size() > 0) {
    write_irradiance_map(dir / "irradiance.json", map);
    write_pfm(dir / "irradiance.pfm", irradiance_image(map));
  }
  for (std::size_t c = 0; c < cams.size(); ++c) {
    const View view = prepare_view(l.prepared, cams[c]);
    write_outputs(dir, indexed("render_c", c), render(l.scene, l.prepared, view, src.lighting, config, shadow),
                  a.exposure, true);
  }
  return 0;
}

double psnr(const Image3& img, const Image3& ref, const Image1& alpha) {
  if (img.width() != ref.width() || img.height() != ref.height()) {
    fail(ErrorCode::kMalformedInput, "reference image size differs");
  }
  Image1 mask(alpha.width(), alpha.height());
  mask.data() = (alpha.data().array() > 0.5).cast<double>().matrix();
  return metric_psnr(img, ref, mask);
}

int cmd_relight(const SceneArgs& a, int sweep, const std::string& reference) {
  const ShadingConfig config = shading_config(a);
  const Loaded l = load_scene(a);
  const std::vector<Camera> cams = cameras_from_json(load_json(a.camera));
  std::vector<LightSource> frames;
  if (!a.env.empty()) {
    if (!a.lights.empty()) fail(ErrorCode::kMalformedInput, "give either --lights or --env");
    for (const std::string& e : a.env) frames.push_back(env_source(e));
  } else {
    if (a.lights.empty()) fail(ErrorCode::kMalformedInput, "relight needs --lights or --env");
    const LightRig rig = light_rig_from_json(load_json(a.lights));
    if (sweep > 0) {
      // One light at a time, evenly spaced through the rig.
      const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(sweep), rig.size());
      for (std::size_t i = 0; i < n; ++i) {
        LightRig one = rig;
        one.set_all(false);
        one.active[i * rig.size() / n] = true;
        frames.push_back(point_source(indexed("light", i * rig.size() / n), one));
      }
    } else {
      frames.push_back(point_source("lights", rig));
    }
  }
  const fs::path dir(a.out);
  fs::create_directories(dir);
  std::vector<View> views;
  for (const Camera& c : cams) views.push_back(prepare_view(l.prepared, c));
  std::ofstream csv;
  if (!reference.empty()) {
    csv.open(dir / "psnr.csv");
    csv << "frame,camera,source,psnr\n";
  }
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const Eigen::VectorXd shadow = shadow_for(l, frames[f], config, a);
    for (std::size_t c = 0; c < views.size(); ++c) {
      const std::string stem = indexed("frame", f) + indexed("_c", c);
      const RenderResult r = render(l.scene, l.prepared, views[c], frames[f].lighting, config, shadow);
      write_outputs(dir, stem, r, a.exposure, false);
      if (!reference.empty()) {
        const double p = psnr(r.color, read_pfm3(fs::path(reference) / (stem + ".pfm")), r.gbuffer.alpha);
        csv << f << ',' << c << ',' << frames[f].name << ',' << p << '\n';
        std::cout << stem << " psnr " << p << '\n';
      }
    }
  }
  return 0;
}

int cmd_irradiance(const SceneArgs& a, int blur) {
  const Loaded l = load_scene(a);
  const LightSource src = single_source(a);
  IrradianceMap map = irradiance_uv_map(l.rig, l.pose, src.emitters, a.spp, a.seed);
  if (blur > 0) map = apply_shadow_operator(map, ShadowOperator{ShadowOperator::Kind::kBlur, blur});
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_irradiance_map(dir / "irradiance.json", map);
  write_pfm(dir / "irradiance.pfm", irradiance_image(map));
  return 0;
}

int cmd_fit(const std::string& config_path, const std::vector<std::string>& flags, std::optional<std::uint64_t> seed,
            std::optional<int> steps, const std::string& out) {
  const Json doc = load_json(config_path);
  if (!doc.is_object()) fail(ErrorCode::kMalformedInput, "fit config: expected an object");
  for (const auto& item : doc.items()) {
    if (item.key() != "experiment" && item.key() != "fit") {
      fail(ErrorCode::kMalformedInput, "fit config: unknown key '" + item.key() + "'");
    }
  }
  const RoundTripSpec spec = round_trip_spec_from_json(doc.value("experiment", Json::object()));
  FitOptions options = fit_options_from_json(doc.value("fit", Json::object()));
  for (const std::string& f : flags) apply_flag(options.config, f);
  if (seed) options.seed = *seed;
  if (steps) options.steps = *steps;

  const RoundTrip trip = make_round_trip(spec);
  const FitResult result = fit_round_trip(trip, options);
  const fs::path dir(out);
  fs::create_directories(dir);
  write_scene(dir / "truth.json", trip.truth);
  write_scene(dir / "fitted.json", result.scene);
  write_trace_csv(dir / "trace.csv", result.trace);
  Json metrics;
  metrics["train"] = {{"psnr", result.train.psnr}, {"ssim", result.train.ssim}};
  metrics["heldout"] = {{"psnr", result.heldout.psnr}, {"ssim", result.heldout.ssim}};
  metrics["steps"] = options.steps;
  metrics["experiment"] = to_json(spec);
  metrics["fit"] = to_json(options);
  save_json(dir / "metrics.json", metrics);
  std::cout << "train psnr " << result.train.psnr << " heldout psnr " << result.heldout.psnr << '\n';
  return 0;
}

int cmd_validate(const std::string& suite, double threshold_scale, const std::string& out) {
  std::vector<SuiteReport> reports = run_suites(suite);
  for (SuiteReport& r : reports) {
    for (Check& c : r.checks) c = rescaled(c, threshold_scale);
  }
  Json doc;
  bool passed = true;
  Json suites = Json::array();
  for (const SuiteReport& r : reports) {
    Json checks = Json::array();
    for (const Check& c : r.checks) {
      checks.push_back({{"name", c.name},
                        {"passed", c.passed},
                        {"measured", c.measured},
                        {"threshold", c.threshold},
                        {"comparison", c.inclusive ? "<=" : "<"},
                        {"detail", c.detail}});
    }
    suites.push_back({{"suite", r.name}, {"passed", r.passed()}, {"checks", checks}});
    passed = passed && r.passed();
  }
  doc["passed"] = passed;
  doc["suites"] = suites;
  std::cout << doc.dump(2) << '\n';
  if (!out.empty()) save_json(out, doc);
  return passed ? 0 : kValidationFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relightable Gaussian splatting toolkit"};
  app.require_subcommand(1);

  std::string rig_kind = "arm", rig_config, out = ".";
  int texel_grid = 0, dome = 1024, image_size = 256;
  double radiance = 0.8;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("gen-scene", "Toy rig scene, ground-truth appearance, dome rig and cameras");
  gen->add_option("--rig", rig_kind, "arm or head")->check(CLI::IsMember({"arm", "head"}));
  gen->add_option("--rig-config", rig_config, "Rig parameters (JSON)");
  gen->add_option("--texel-grid", texel_grid, "Texels per chart side");
  gen->add_option("--seed", gen_seed, "Appearance seed");
  gen->add_option("--dome-lights", dome, "Lights on the generated dome");
  gen->add_option("--radiance", radiance, "Radiance of the dome with every light on");
  gen->add_option("--image-size", image_size, "Side of the generated camera images");
  gen->add_option("--out", out, "Output directory");

  SceneArgs render_args;
  auto* render_cmd = app.add_subcommand("render", "Render images and G-buffers");
  add_scene_options(render_cmd, render_args, true);
  render_cmd->add_option("--irradiance", render_args.irradiance, "Precomputed irradiance map (JSON) to shadow with");

  SceneArgs relight_args;
  int sweep = 0;
  std::string reference;
  auto* relight = app.add_subcommand("relight", "Render a light sweep or a set of environment maps");
  add_scene_options(relight, relight_args, true, true);
  relight->add_option("--sweep", sweep, "Frames lit by a single light, spaced through the rig");
  relight->add_option("--reference", reference, "Directory of reference frames for PSNR");

  SceneArgs irr_args;
  int blur = 0;
  auto* irradiance = app.add_subcommand("irradiance", "Precompute a normalized irradiance map");
  add_scene_options(irradiance, irr_args, false);
  irradiance->add_option("--blur", blur, "Blur radius in texels applied to the map");

  std::string fit_config;
  std::vector<std::string> fit_flags;
  std::optional<std::uint64_t> fit_seed;
  std::optional<int> fit_steps;
  std::string fit_out = ".";
  auto* fit = app.add_subcommand("fit", "Synthetic round trip: render ground truth, fit appearance");
  fit->add_option("--config", fit_config, "Fit config JSON with 'experiment' and 'fit' blocks")->required();
  fit->add_option("--flag", fit_flags, "Shading switch key=value for the fit");
  fit->add_option("--seed", fit_seed, "Override the fit seed");
  fit->add_option("--steps", fit_steps, "Override the step count");
  fit->add_option("--out", fit_out, "Output directory");

  std::string suite = "all", report;
  double threshold_scale = 1.0;
  auto* validate = app.add_subcommand("validate", "Run oracle suites and print a JSON report");
  validate->add_option("suite", suite, "harmonics, compositing, parseval, bvh, irradiance, gradients or all");
  validate->add_option("--out", report, "Also write the report to this file");
  validate->add_option("--threshold-scale", threshold_scale, "Multiply every threshold by this factor")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kMalformed;
  }

  try {
    if (*gen) return cmd_gen_scene(rig_kind, rig_config, texel_grid, gen_seed, dome, radiance, image_size, out);
    if (*render_cmd) return cmd_render(render_args);
    if (*relight) return cmd_relight(relight_args, sweep, reference);
    if (*irradiance) return cmd_irradiance(irr_args, blur);
    if (*fit) return cmd_fit(fit_config, fit_flags, fit_seed, fit_steps, fit_out);
    if (*validate) return cmd_validate(suite, threshold_scale, report);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::kMalformedInput || e.code() == ErrorCode::kInvalidArgument ? kMalformed : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
