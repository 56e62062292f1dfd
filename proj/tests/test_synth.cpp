#include <doctest.h>

#include <cmath>

#include <Eigen/Geometry>

#include "amodal/digest.hpp"
#include "amodal/error.hpp"
#include "amodal/occlusion/masks.hpp"
#include "amodal/synth/scene.hpp"
#include "amodal/tensor/image_io.hpp"
#include "amodal/tensor/txf.hpp"
#include "support.hpp"

using namespace amodal;
using namespace amodal::synth;

namespace {

SceneSpec base_spec() {
  SceneSpec s;
  s.height = 48;
  s.width = 64;
  s.frames = 5;
  s.seed = 3;
  s.object.width = 16;
  s.object.height = 12;
  s.object.thickness = 0.0;
  s.object.motion.start = {20, 24};
  s.object.motion.velocity = {2, 0};
  s.occluder.width = 6;
  s.occluder.height = 60;
  s.occluder.motion.start = {30, 24};
  return s;
}

}  // namespace

TEST_CASE("single static frame") {
  SceneSpec s = base_spec();
  s.frames = 1;
  const SceneBundle b = generate_scene(s);
  CHECK(b.frames.size() == 1);
  CHECK(b.flows.empty());
  CHECK(b.clouds.size() == 1);
  CHECK(b.clouds[0].size() == static_cast<std::size_t>(s.points));
}

TEST_CASE("translation gives constant flow on object pixels") {
  const SceneSpec s = base_spec();
  const SceneBundle b = generate_scene(s);
  for (int t = 0; t + 1 < s.frames; ++t) {
    const FlowField fwd = gt_flow(s, t + 1, t);
    for (int y = 0; y < s.height; ++y) {
      for (int x = 0; x < s.width; ++x) {
        if (b.amodal[static_cast<std::size_t>(t)](y, x)) {
          CHECK(std::abs(fwd.u(y, x) - 2.0) < 1e-9);
          CHECK(std::abs(fwd.v(y, x)) < 1e-9);
        } else {
          CHECK(fwd.u(y, x) == 0.0);
          CHECK(fwd.v(y, x) == 0.0);
        }
      }
    }
    CHECK(b.flows[static_cast<std::size_t>(t)] == gt_flow(s, t, t + 1));
  }
  CHECK(gt_flow(s, 2, 2).is_zero());
  CHECK_THROWS_AS(gt_flow(s, 0, 5), Error);
}

TEST_CASE("rotation flow matches the rigid transform oracle") {
  SceneSpec s = base_spec();
  s.object.motion.velocity = {0.5, -0.25};
  s.object.motion.spin = 0.1;
  s.object.motion.angle = 0.2;
  for (int t : {1, 3}) {
    const int tau = t - 1;
    const FlowField f = gt_flow(s, tau, t);
    const BinaryMask m = render_object(s, t).mask;
    const Eigen::Vector2d ct = s.object.motion.centre(t), ctau = s.object.motion.centre(tau);
    const Eigen::Matrix2d rel = Eigen::Rotation2Dd(s.object.motion.angle_at(tau) - s.object.motion.angle_at(t)).toRotationMatrix();
    int n = 0;
    for (int y = 0; y < s.height; ++y) {
      for (int x = 0; x < s.width; ++x) {
        if (!m(y, x)) continue;
        const Eigen::Vector2d dst = ctau + rel * (Eigen::Vector2d(x, y) - ct);
        CHECK(std::abs(f.u(y, x) - (dst.x() - x)) < 1e-9);
        CHECK(std::abs(f.v(y, x) - (dst.y() - y)) < 1e-9);
        ++n;
      }
    }
    CHECK(n > 100);
  }
}

TEST_CASE("forward-backward composition closes for rigid motion") {
  SceneSpec s = base_spec();
  s.object.shape = ObjectShape::LShape;
  s.object.motion.spin = 0.05;
  s.object.motion.velocity = {1.5, 0.5};
  const BinaryMask m = render_object(s, 1).mask;
  int n = 0;
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      if (!m(y, x)) continue;
      const auto fwd = correspond(s, 2, 1, x, y);
      REQUIRE(fwd);
      const auto back = correspond(s, 1, 2, fwd->x(), fwd->y());
      REQUIRE(back);
      CHECK(std::hypot(back->x() - x, back->y() - y) < 1e-9);
      ++n;
    }
  }
  CHECK(n > 50);
  const FlowField fwd = gt_flow(s, 2, 1);
  int px = 0, py = 0;
  while (!m(py, px)) {
    if (++px == s.width) px = 0, ++py;
  }
  const auto p = correspond(s, 2, 1, px, py);
  REQUIRE(p);
  CHECK(std::abs(p->x() - px - fwd.u(py, px)) < 1e-12);
}

TEST_CASE("mask accounting, full cover and determinism") {
  SceneSpec s = base_spec();
  s.occluder.shape = OccluderShape::Limb;
  s.occluder.motion.angle = -1.2;
  s.occluder.motion.spin = 0.1;
  const SceneBundle a = generate_scene(s);
  for (std::size_t t = 0; t < a.frames.size(); ++t) {
    CHECK(union_mask(a.visible[t], intersect_mask(a.amodal[t], a.occluder[t])) == a.amodal[t]);
  }
  const SceneBundle b = generate_scene(s);
  CHECK(a.frames == b.frames);
  CHECK(a.clouds == b.clouds);
  CHECK(a.flows == b.flows);

  SceneSpec cover = base_spec();
  cover.occluder.shape = OccluderShape::Rect;
  cover.occluder.width = 64;
  cover.occluder.height = 48;
  cover.occluder.motion.start = {31.5, 23.5};
  const SceneBundle c = generate_scene(cover);
  CHECK(occlusion_ratio(c.visible[2], c.amodal[2]) == 1.0);

  SceneSpec off = base_spec();
  off.object.motion.velocity = {40, 0};
  try {
    generate_scene(off);
    FAIL("expected off-canvas error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("frame 2") != std::string::npos);
  }
}

TEST_CASE("point clouds project inside the amodal silhouette") {
  SceneSpec s = base_spec();
  s.object.thickness = 0.4;
  s.object.motion.start = {12, 10};
  const SceneBundle b = generate_scene(s);
  for (std::size_t t = 0; t < b.frames.size(); ++t) {
    const auto pts = project_points(b.clouds[t], b.camera, 100000);
    int in = 0;
    for (const auto& p : pts) {
      const int x = static_cast<int>(std::lround(p.x)), y = static_cast<int>(std::lround(p.y));
      if (x < 0 || y < 0 || x >= s.width || y >= s.height) continue;
      // nearest pixel or one of its neighbours is object
      bool hit = false;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = std::clamp(x + dx, 0, s.width - 1), yy = std::clamp(y + dy, 0, s.height - 1);
          hit = hit || b.amodal[t](yy, xx);
        }
      }
      in += hit;
    }
    CHECK(in == static_cast<int>(pts.size()));
  }
}

TEST_CASE("spec json") {
  const SceneSpec s = base_spec();
  const SceneSpec back = scene_from_json(to_json(s));
  CHECK(to_json(back) == to_json(s));
  nlohmann::json bad = to_json(s);
  bad["object"]["width"] = "wide";
  try {
    scene_from_json(bad);
    FAIL("expected schema error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Schema);
    CHECK(std::string(e.what()).find("object.width") != std::string::npos);
  }
  nlohmann::json typo = to_json(s);
  typo["frmaes"] = 3;
  CHECK_THROWS_AS(scene_from_json(typo), Error);
}

TEST_CASE("block matching") {
  std::mt19937_64 rng(40);
  const FeatureMap a = testing::random_map(rng, 20, 24, 3, 0, 1);
  const BlockMatch same = block_matching_flow(a, a, 2);
  CHECK(same.flow.is_zero());
  CHECK(same.low_confidence.none());

  FeatureMap shifted(20, 24, 3);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 24; ++x) {
      for (int c = 0; c < 3; ++c) shifted.at(y, x, c) = a.at(y, std::max(0, x - 1), c);
    }
  }
  const BlockMatch m = block_matching_flow(a, shifted, 2);
  for (int y = 3; y < 17; ++y) {
    for (int x = 3; x < 20; ++x) {
      CHECK(m.flow.u(y, x) == 1.0);
      CHECK(m.flow.v(y, x) == 0.0);
    }
  }
  const BlockMatch flat = block_matching_flow(FeatureMap(10, 10, 1, 0.5), FeatureMap(10, 10, 1, 0.5), 1);
  CHECK(flat.low_confidence.count() == 100);
  CHECK(flat.flow.is_zero());
}

TEST_CASE("dataset layout") {
  testing::TempDir dir("synth");
  const SceneSpec s = base_spec();
  const SceneBundle b = generate_scene(s);
  write_dataset(s, b, dir.path());
  namespace fs = std::filesystem;
  for (const char* sub : {"frames", "masks/visible", "masks/occluder", "points", "gt/complete", "gt/amodal"}) {
    int n = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path() / sub)) ++n;
    CHECK(n == s.frames);
  }
  CHECK(fs::exists(dir.path() / "gt/flows/000001.txf"));
  CHECK_FALSE(fs::exists(dir.path() / "gt/flows/000000.txf"));
  CHECK(read_mask_file(dir.path() / "gt/amodal/000002.png") == b.amodal[2]);
  const Tensor cloud = read_tensor(dir.path() / "points/000001.txf");
  CHECK(cloud.dims == std::vector<std::uint64_t>{static_cast<std::uint64_t>(s.points), 3});
  CHECK(read_flow_field(dir.path() / "gt/flows/000003.txf") == b.flows[2]);

  testing::TempDir again("synth2");
  write_dataset(s, generate_scene(s), again.path());
  CHECK(directory_digest(dir.path()) == directory_digest(again.path()));
}
