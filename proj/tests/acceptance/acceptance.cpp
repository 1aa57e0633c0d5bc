// Acceptance runner: one PASS/FAIL line per criterion. With arguments, runs
// only the listed criterion numbers.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "prt/synthetic.hpp"
#include "prt/validation.hpp"

using namespace prt;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string describe(const std::vector<Check>& checks) {
  std::ostringstream s;
  s.precision(4);
  for (std::size_t i = 0; i < checks.size(); ++i) {
    const Check& c = checks[i];
    s << (i ? "; " : "") << c.name << " " << c.measured << (c.inclusive ? " <= " : " < ") << c.threshold
      << (c.detail.empty() ? "" : " (" + c.detail + ")") << (c.passed ? "" : " failed");
  }
  return s.str();
}

Outcome from_checks(const std::vector<Check>& checks) {
  bool ok = true;
  for (const Check& c : checks) ok = ok && c.passed;
  return {ok, describe(checks)};
}

Outcome parameter_counts() { return from_checks(check_param_counts()); }

Outcome zh_rotation() { return from_checks({check_zh_rotation(100, 100, 1000000, 1)}); }

Outcome compositing() { return from_checks({check_compositing(50, 64, 128, 2)}); }

Outcome parseval() { return from_checks({check_parseval(20, 1000000, 3)}); }

Outcome irradiance() { return from_checks(check_irradiance(10000)); }

Outcome gradients() {
  ShadingConfig forward;
  forward.deferred = false;
  ShadingConfig sh;
  sh.diffuse_basis = TransportBasis::kSh;
  return from_checks({check_gradients(ShadingConfig{}), check_gradients(forward), check_gradients(sh)});
}

Outcome round_trip() {
  const RoundTripSpec spec;
  const RoundTrip trip = make_round_trip(spec);
  FitOptions options;
  options.steps = 2000;
  options.batch = 2;
  const FitResult zh = fit_round_trip(trip, options);
  options.config.diffuse_basis = TransportBasis::kSh;
  const FitResult sh = fit_round_trip(trip, options);
  std::ostringstream s;
  s.precision(4);
  s << "held-out PSNR zh " << zh.heldout.psnr << " dB (>= 35), sh " << sh.heldout.psnr
    << " dB; SSIM zh " << zh.heldout.ssim << ", sh " << sh.heldout.ssim << "; train PSNR zh " << zh.train.psnr
    << ", sh " << sh.train.psnr;
  return {zh.heldout.psnr >= 35.0 && zh.heldout.psnr > sh.heldout.psnr, s.str()};
}

LightRig normalized_dome(int count, double radiance) {
  LightRig dome = make_dome_rig(count);
  for (PointLight& l : dome.lights) l.intensity = Eigen::Vector3d::Constant(4.0 * M_PI * radiance / count);
  return dome;
}

Outcome shadow_effect() {
  RigSpec spec;
  spec.texel_grid = 32;
  const ToyRig rig = build_toy_rig(spec);
  const Scene scene = generate_scene(spec, 1);
  const Pose pose = pose_from_angles(rig, std::vector<double>{170.0, 10.0});
  const LightRig dome = normalized_dome(1024, 0.8);
  const IrradianceMap map = irradiance_uv_map(rig, pose, irradiance_lights(dome), kFullEnumeration, 0);
  const Eigen::VectorXd shadow = primitive_shadow(map, scene.primitives);

  const PreparedScene prepared = prepare_scene(scene, rig, pose);
  const View view = prepare_view(prepared, rig_cameras(spec, std::vector<double>{0.0}, 256).front());
  const Lighting lighting = make_lighting(dome);
  ShadingConfig on, off;
  off.shadow = false;
  const RenderResult shadowed = render(scene, prepared, view, lighting, on, shadow);
  const RenderResult plain = render(scene, prepared, view, lighting, off, shadow);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(shadow.size());
  const RenderResult unit = render(scene, prepared, view, lighting, on, ones);

  // Occluded texels have irradiance below 1/2; their pixels are those where
  // the composited share of occluded primitives exceeds 1/2.
  const Eigen::VectorXd lit = (shadow.array() < 0.5).select(Eigen::VectorXd::Zero(shadow.size()), ones);
  const Image1 open = composite_shadow(view.coverage, lit);
  double on_sum = 0.0, off_sum = 0.0;
  int pixels = 0;
  for (int y = 0; y < view.camera.height; ++y) {
    for (int x = 0; x < view.camera.width; ++x) {
      if (view.coverage.alpha.pixel(x, y)(0) < 0.5 || open.pixel(x, y)(0) >= 0.5) continue;
      on_sum += luminance(shadowed.color.pixel(x, y));
      off_sum += luminance(plain.color.pixel(x, y));
      ++pixels;
    }
  }
  const double gap = off_sum > 0.0 ? 1.0 - on_sum / off_sum : 0.0;
  const bool identity = unit.color == plain.color;
  std::ostringstream s;
  s.precision(4);
  s << pixels << " occluded pixels, luminance gap " << 100.0 * gap << "% (> 5%); shadow = 1 "
    << (identity ? "bitwise equals" : "differs from") << " shadow off";
  return {pixels > 0 && gap > 0.05 && identity, s.str()};
}

struct RenderRun {
  IrradianceMap map;
  Image3 color;
};

RenderRun render_run() {
  RigSpec spec;
  spec.texel_grid = 32;
  const ToyRig rig = build_toy_rig(spec);
  const Scene scene = generate_scene(spec, 3);
  const Pose pose = pose_from_angles(rig, std::vector<double>{45.0, 30.0});
  const LightRig dome = normalized_dome(1024, 0.8);
  RenderRun out;
  out.map = irradiance_uv_map(rig, pose, irradiance_lights(dome), 4, 17);
  const PreparedScene prepared = prepare_scene(scene, rig, pose);
  const View view = prepare_view(prepared, rig_cameras(spec, std::vector<double>{30.0}, 128).front());
  out.color = render(scene, prepared, view, make_lighting(dome), ShadingConfig{},
                     primitive_shadow(out.map, scene.primitives))
                  .color;
  return out;
}

FitResult fit_run() {
  RoundTripSpec spec;
  spec.rig.texel_grid = 8;
  spec.dome_lights = 256;
  spec.train_lightings = 4;
  spec.heldout_lightings = 2;
  spec.min_on = 16;
  spec.max_on = 64;
  spec.image_size = 48;
  const RoundTrip trip = make_round_trip(spec);
  FitOptions options;
  options.steps = 40;
  options.batch = 2;
  options.seed = 5;
  return fit_round_trip(trip, options);
}

bool same_fit(const FitResult& a, const FitResult& b) {
  if (a.scene.primitives != b.scene.primitives || a.trace.size() != b.trace.size()) return false;
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    if (!(a.trace[i].loss == b.trace[i].loss)) return false;
  }
  return a.heldout.psnr == b.heldout.psnr && a.heldout.ssim == b.heldout.ssim;
}

Outcome determinism() {
  const int hardware = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::vector<int> counts{1, 4, hardware};
  std::vector<RenderRun> renders;
  std::vector<FitResult> fits;
  for (int n : counts) {
    set_worker_threads(n);
    renders.push_back(render_run());
    fits.push_back(fit_run());
  }
  set_worker_threads(0);
  bool render_ok = true, fit_ok = true;
  for (std::size_t i = 1; i < counts.size(); ++i) {
    render_ok = render_ok && renders[i].map == renders[0].map && renders[i].color == renders[0].color;
    fit_ok = fit_ok && same_fit(fits[i], fits[0]);
  }
  std::ostringstream s;
  s << "threads 1, 4, " << hardware << ": render " << (render_ok ? "identical" : "differs") << ", fit "
    << (fit_ok ? "identical" : "differs");
  return {render_ok && fit_ok, s.str()};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "parameter counts", parameter_counts},
      {2, "zonal rotation", zh_rotation},
      {3, "compositing oracle", compositing},
      {4, "diffuse Parseval", parseval},
      {5, "irradiance exactness and unbiasedness", irradiance},
      {6, "gradient checks", gradients},
      {7, "round-trip inverse rendering", round_trip},
      {8, "shadow effect", shadow_effect},
      {9, "determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.passed) ++failures;
    std::printf("%s %d %s: %s [%.1f s]\n", o.passed ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), seconds);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
