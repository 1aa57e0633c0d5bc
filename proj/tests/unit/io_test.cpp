#include "prt/io.hpp"

#include <fstream>
#include <random>

#include "gtest/gtest.h"

namespace prt {
namespace {

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("prt_io_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path file(const std::string& name) const { return dir_ / name; }

  fs::path dir_;
};

template <int C>
Image<C> float_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image<C> img(w, h);
  for (Eigen::Index i = 0; i < img.data().size(); ++i) {
    img.data().data()[i] = static_cast<float>(4.0 * uniform01(rng) - 1.0);
  }
  return img;
}

void expect_malformed(auto&& f) {
  try {
    f();
    FAIL() << "no error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedInput) << e.what();
  }
}

TEST_F(IoTest, PfmRoundTrip) {
  const Image3 rgb = float_image<3>(7, 5, 1);
  const Image1 gray = float_image<1>(3, 9, 2);
  write_pfm(file("a.pfm"), rgb);
  write_pfm(file("b.pfm"), gray);
  EXPECT_TRUE(read_pfm3(file("a.pfm")) == rgb);
  EXPECT_TRUE(read_pfm1(file("b.pfm")) == gray);
  expect_malformed([&] { read_pfm1(file("a.pfm")); });
  expect_malformed([&] { read_pfm3(file("missing.pfm")); });
}

TEST_F(IoTest, PfmRowOrderAndBigEndian) {
  // Hand-written big-endian file: bottom row first.
  std::ofstream out(file("be.pfm"), std::ios::binary);
  out << "Pf\n1 2\n1.0\n";
  const unsigned char bottom[] = {0x3f, 0x80, 0x00, 0x00};  // 1.0f
  const unsigned char top[] = {0x40, 0x00, 0x00, 0x00};     // 2.0f
  out.write(reinterpret_cast<const char*>(bottom), 4);
  out.write(reinterpret_cast<const char*>(top), 4);
  out.close();
  const Image1 img = read_pfm1(file("be.pfm"));
  EXPECT_EQ(img.pixel(0, 0)(0), 2.0);
  EXPECT_EQ(img.pixel(0, 1)(0), 1.0);
}

TEST_F(IoTest, PfmTruncated) {
  std::ofstream out(file("t.pfm"), std::ios::binary);
  out << "PF\n4 4\n-1.0\n" << "abc";
  out.close();
  expect_malformed([&] { read_pfm3(file("t.pfm")); });
}

TEST_F(IoTest, PngReencodesIdentically) {
  Image3 img = float_image<3>(9, 4, 3);
  write_png(file("a.png"), img);
  const Image3 decoded = read_png(file("a.png"));
  EXPECT_GE(decoded.data().minCoeff(), 0.0);
  EXPECT_LE(decoded.data().maxCoeff(), 1.0);
  write_png(file("b.png"), decoded);
  EXPECT_TRUE(read_png(file("b.png")) == decoded);
  // Clamped values decode to the ends of the range.
  const Image3 bright(1, 1, 5.0);
  write_png(file("c.png"), bright);
  EXPECT_EQ(read_png(file("c.png")).data()(0, 0), 1.0);
  expect_malformed([&] { read_png(file("missing.png")); });
}

TEST_F(IoTest, SceneRoundTripIsBitExact) {
  RigSpec spec;
  spec.texel_grid = 8;
  Scene scene = generate_scene(spec, 5);
  scene.pose_deg = {12.5, 33.0};
  scene.primitives[0].local_rotation = Eigen::Quaterniond(0.9, 0.1, -0.2, 0.3).normalized();
  write_scene(file("s.json"), scene);
  const Scene back = read_scene(file("s.json"));
  EXPECT_TRUE(back.rig == scene.rig);
  EXPECT_EQ(back.pose_deg, scene.pose_deg);
  ASSERT_EQ(back.primitives.size(), scene.primitives.size());
  for (std::size_t k = 0; k < scene.primitives.size(); ++k) EXPECT_TRUE(back.primitives[k] == scene.primitives[k]);
  EXPECT_TRUE(back.sh_transport.empty());

  scene.sh_transport.resize(scene.primitives.size());
  for (auto& t : scene.sh_transport) t.values.setRandom();
  write_scene(file("sh.json"), scene);
  const Scene sh = read_scene(file("sh.json"));
  ASSERT_EQ(sh.sh_transport.size(), scene.sh_transport.size());
  for (std::size_t k = 0; k < sh.sh_transport.size(); ++k) EXPECT_EQ(sh.sh_transport[k].values, scene.sh_transport[k].values);

  fs::resize_file(file("sh.bin"), 64);
  expect_malformed([&] { read_scene(file("sh.json")); });
}

TEST_F(IoTest, IrradianceMapRoundTrip) {
  IrradianceMap map;
  map.grid = 4;
  map.charts = 2;
  map.values = Eigen::VectorXd::Random(32);
  map.occupied.assign(32, true);
  map.occupied[3] = false;
  map.samples = 7;
  map.seed = 0xfeedULL;
  write_irradiance_map(file("m.json"), map);
  EXPECT_TRUE(read_irradiance_map(file("m.json")) == map);
  const Image1 img = irradiance_image(map);
  EXPECT_EQ(img.width(), 4);
  EXPECT_EQ(img.height(), 8);
  EXPECT_EQ(img.data()(0, 3), 0.0);
  EXPECT_EQ(img.data()(0, 5), map.values(5));
}

TEST_F(IoTest, TraceCsvRoundTrip) {
  std::vector<TraceRow> trace(3);
  for (int i = 0; i < 3; ++i) {
    trace[i].step = i;
    trace[i].loss.rec = 0.1 / (i + 3);
    trace[i].loss.bound = 1e-300 * i;
    trace[i].loss.total = M_PI * i;
  }
  write_trace_csv(file("t.csv"), trace);
  const std::vector<TraceRow> back = read_trace_csv(file("t.csv"));
  ASSERT_EQ(back.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].step, i);
    EXPECT_EQ(back[i].loss.rec, trace[i].loss.rec);
    EXPECT_EQ(back[i].loss.bound, trace[i].loss.bound);
    EXPECT_EQ(back[i].loss.total, trace[i].loss.total);
  }
}

TEST(IoJson, ConfigsRoundTrip) {
  RigSpec rig;
  rig.kind = RigKind::kHead;
  rig.head_radius = 0.1 / 3.0;
  EXPECT_TRUE(rig_spec_from_json(Json::parse(to_json(rig).dump())) == rig);

  const Camera cam = Camera::look_at(Eigen::Vector3d(1, -2, 0.5), Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitZ(),
                                     30.0, 64, 48);
  const Camera back = camera_from_json(Json::parse(to_json(cam).dump()));
  EXPECT_EQ(back.fx, cam.fx);
  EXPECT_EQ(back.cy, cam.cy);
  EXPECT_TRUE(back.world_to_camera.matrix() == cam.world_to_camera.matrix());
  const Json look = Json::parse(R"({"look_at": {"eye": [1, -2, 0.5], "target": [0, 0, 0], "fov_y_deg": 30,
                                                "width": 64, "height": 48}})");
  EXPECT_TRUE(camera_from_json(look).world_to_camera.matrix().isApprox(cam.world_to_camera.matrix()));
  EXPECT_EQ(cameras_from_json(cameras_to_json({cam, cam})).size(), 2u);

  LightRig lights = make_dome_rig(16);
  lights.set_all(false);
  lights.active[3] = true;
  const LightRig lb = light_rig_from_json(Json::parse(to_json(lights).dump()));
  EXPECT_EQ(lb.active, lights.active);
  for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(lb.lights[j].position, lights.lights[j].position);

  EXPECT_EQ(pose_from_json(pose_to_json({1.5, -2.0})), (std::vector<double>{1.5, -2.0}));

  ShadingConfig sc;
  sc.diffuse_basis = TransportBasis::kSh;
  sc.normal = NormalSource::kMesh;
  sc.shadow = false;
  EXPECT_TRUE(shading_config_from_json(to_json(sc)) == sc);

  FitOptions fo;
  fo.steps = 17;
  fo.batch = 3;
  fo.seed = 99;
  fo.weights.mask = 0.3;
  fo.bounds.roughness = {0.02, 0.5};
  fo.config = sc;
  const FitOptions fb = fit_options_from_json(Json::parse(to_json(fo).dump()));
  EXPECT_EQ(fb.steps, 17);
  EXPECT_EQ(fb.seed, 99u);
  EXPECT_TRUE(fb.weights == fo.weights);
  EXPECT_TRUE(fb.bounds == fo.bounds);
  EXPECT_TRUE(fb.adam == fo.adam);
  EXPECT_TRUE(fb.config == fo.config);

  RoundTripSpec rt;
  rt.train_poses = {{0, 0}, {10, 20}, {30, 40}};
  rt.azimuths = {-10, 0, 10};
  const RoundTripSpec rb = round_trip_spec_from_json(Json::parse(to_json(rt).dump()));
  EXPECT_EQ(rb.train_poses, rt.train_poses);
  EXPECT_EQ(rb.azimuths, rt.azimuths);
  EXPECT_EQ(rb.radiance, rt.radiance);
}

TEST(IoJson, Flags) {
  ShadingConfig c;
  apply_flag(c, "diffuse_basis=sh");
  apply_flag(c, "deferred=off");
  apply_flag(c, "shadow=off");
  apply_flag(c, "normal=mesh");
  EXPECT_EQ(c.diffuse_basis, TransportBasis::kSh);
  EXPECT_FALSE(c.deferred);
  EXPECT_FALSE(c.shadow);
  EXPECT_EQ(c.normal, NormalSource::kMesh);
  expect_malformed([&] { apply_flag(c, "shadow"); });
  expect_malformed([&] { apply_flag(c, "shadow=maybe"); });
  expect_malformed([&] { apply_flag(c, "colour=red"); });
}

TEST(IoJson, MalformedDocuments) {
  expect_malformed([] { rig_spec_from_json(Json::parse(R"({"kind": "leg"})")); });
  expect_malformed([] { rig_spec_from_json(Json::parse(R"({"texel_grid": "big"})")); });
  expect_malformed([] { rig_spec_from_json(Json::parse(R"({"typo": 1})")); });
  expect_malformed([] { camera_from_json(Json::parse(R"({"fx": 1})")); });
  expect_malformed([] { camera_from_json(Json::parse(R"({"fx": 1, "fy": 1, "cx": 0, "cy": 0, "width": 0,
                                                          "height": 4, "world_to_camera": [1,0,0,0,0,1,0,0,0,0,1,0,0,0,0,1]})")); });
  expect_malformed([] { light_rig_from_json(Json::parse(R"({"lights": [{"position": [0, 0, 0]}]})")); });
  expect_malformed([] { light_rig_from_json(Json::parse(R"({"lights": [{"position": [1, 0, 0], "intensity": [-1, 0, 0]}]})")); });
  expect_malformed([] { fit_options_from_json(Json::parse(R"({"steps": -1})")); });
  expect_malformed([] { round_trip_spec_from_json(Json::parse(R"({"min_on": 5, "max_on": 2})")); });
  expect_malformed([] { load_json("/nonexistent/prt.json"); });
}

}  // namespace
}  // namespace prt
