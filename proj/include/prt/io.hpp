#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "prt/fit.hpp"
#include "prt/irradiance.hpp"
#include "prt/lighting.hpp"
#include "prt/render.hpp"
#include "prt/scene.hpp"
#include "prt/synthetic.hpp"

// File formats. Every reader throws malformed-input on bad content or a
// missing file.
//   PFM   float imagery, little-endian, rows stored bottom to top
//   PNG   8-bit sRGB previews
//   JSON  configs, rigs, cameras, poses and scene headers
//   CSV   loss traces
// Scenes and irradiance maps keep their numeric payload in a raw float64
// sidecar next to the JSON header, so they round-trip bit for bit.

namespace prt {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Images

// Values are stored as float32.
void write_pfm(const fs::path& path, const Image3& image);
void write_pfm(const fs::path& path, const Image1& image);
Image3 read_pfm3(const fs::path& path);
Image1 read_pfm1(const fs::path& path);

// Clamped to [0, 1] after scaling by `exposure`, then sRGB encoded.
void write_png(const fs::path& path, const Image3& image, double exposure = 1.0);
// Decodes back to linear values; an 8-bit file re-encodes to the same bytes.
Image3 read_png(const fs::path& path);

// ---------------------------------------------------------------------------
// JSON documents

Json load_json(const fs::path& path);
void save_json(const fs::path& path, const Json& doc);

Json to_json(const RigSpec& spec);
RigSpec rig_spec_from_json(const Json& j);

Json to_json(const Camera& cam);
// Either explicit intrinsics plus a row-major 4x4 world_to_camera, or a
// "look_at" block {eye, target, up, fov_y_deg, width, height}.
Camera camera_from_json(const Json& j);
// A single camera, an array, or {"cameras": [...]}.
std::vector<Camera> cameras_from_json(const Json& j);
Json cameras_to_json(const std::vector<Camera>& cams);

Json to_json(const LightRig& rig);
LightRig light_rig_from_json(const Json& j);

// {"angles_deg": [...]}, one hinge angle per joint.
Json pose_to_json(const std::vector<double>& angles_deg);
std::vector<double> pose_from_json(const Json& j);

Json to_json(const ShadingConfig& config);
ShadingConfig shading_config_from_json(const Json& j);
// Applies one "key=value" flag: diffuse_basis={zh,sh}, deferred={on,off},
// shadow={on,off}, normal={gaussian,mesh}.
void apply_flag(ShadingConfig& config, const std::string& flag);

Json to_json(const LossWeights& w);
LossWeights loss_weights_from_json(const Json& j);
Json to_json(const FitOptions& options);
FitOptions fit_options_from_json(const Json& j);
Json to_json(const RoundTripSpec& spec);
RoundTripSpec round_trip_spec_from_json(const Json& j);

// ---------------------------------------------------------------------------
// Scenes and maps (JSON header plus <stem>.bin sidecar)

void write_scene(const fs::path& path, const Scene& scene);
Scene read_scene(const fs::path& path);

void write_irradiance_map(const fs::path& path, const IrradianceMap& map);
IrradianceMap read_irradiance_map(const fs::path& path);
// The map viewed as a grid x (grid * charts) image; unoccupied texels are 0.
Image1 irradiance_image(const IrradianceMap& map);

// Environment maps are lat-long PFM images.
EnvironmentMap read_env_map(const fs::path& path);

// ---------------------------------------------------------------------------
// Traces

void write_trace_csv(const fs::path& path, const std::vector<TraceRow>& trace);
std::vector<TraceRow> read_trace_csv(const fs::path& path);

}  // namespace prt
