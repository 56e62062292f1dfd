#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Geometry>

#include "amodal/error.hpp"
#include "amodal/metrics/metrics.hpp"
#include "amodal/splat/gaussians.hpp"
#include "splat_oracles.hpp"
#include "support.hpp"

using namespace amodal;
using namespace amodal::splat;

using namespace testing;

TEST_CASE("render of empty or transparent sets is the background") {
  const auto cam = small_camera(16, 20);
  const Eigen::Vector3d bg(0.1, 0.2, 0.3);
  const FeatureMap empty = render({}, cam, PoseSE3::identity(), 16, 16, bg);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      CHECK(empty.at(y, x, 0) == 0.1);
      CHECK(empty.at(y, x, 2) == 0.3);
    }
  }
  std::mt19937_64 rng(1);
  GaussianSet set = random_set(rng, 4);
  for (auto& g : set) g.opacity = 0;
  PoseSE3 pose;
  pose.translation = {0, 0, 3};
  CHECK(render(set, cam, pose, 16, 16, bg) == empty);
}

TEST_CASE("gaussians behind the camera are skipped") {
  const auto cam = small_camera(16, 20);
  GaussianSet set(1);
  set[0].position = {0, 0, -1};
  const FeatureMap img = render(set, cam, PoseSE3::identity(), 16, 16, Eigen::Vector3d::Zero());
  for (double v : img.data()) CHECK(v == 0.0);
}

TEST_CASE("opaque red gaussian on the optical axis peaks at the principal point") {
  const auto cam = small_camera(15, 30);
  GaussianSet set(1);
  set[0].position = {0, 0, 3};
  set[0].scale = 0.2;
  set[0].color = {1, 0, 0};
  set[0].opacity = 1;
  const FeatureMap img = render(set, cam, PoseSE3::identity(), 15, 15, Eigen::Vector3d::Zero());
  CHECK(img.at(7, 7, 0) == doctest::Approx(1.0).epsilon(1e-12));
  for (int y = 0; y < 15; ++y) {
    for (int x = 0; x < 15; ++x) CHECK(img.at(y, x, 0) <= img.at(7, 7, 0));
  }
  const FeatureMap oracle = composite_oracle(set, cam, PoseSE3::identity(), 15, 15, Eigen::Vector3d::Zero());
  for (std::size_t i = 0; i < img.data().size(); ++i) CHECK(img.data()[i] == doctest::Approx(oracle.data()[i]).epsilon(1e-12));
}

TEST_CASE("render matches the front-to-back compositing oracle") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto set = random_set(rng, 1 + trial % 6);
    const auto pose = random_pose(rng);
    const auto cam = small_camera(12, 14);
    const Eigen::Vector3d bg(0.3, 0.1, 0.6);
    const FeatureMap a = render(set, cam, pose, 12, 12, bg);
    const FeatureMap b = composite_oracle(set, cam, pose, 12, 12, bg);
    for (std::size_t i = 0; i < a.data().size(); ++i) REQUIRE(std::abs(a.data()[i] - b.data()[i]) < 1e-12);
  }
}

TEST_CASE("rigid pose equals pre-transformed gaussians") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const auto set = random_set(rng, 5);
    const auto pose = random_pose(rng);
    const auto cam = small_camera(20, 24);
    GaussianSet moved = set;
    for (auto& g : moved) g.position = pose.apply(g.position);
    const FeatureMap a = render(set, cam, pose, 20, 20, Eigen::Vector3d::Zero());
    const FeatureMap b = render(moved, cam, PoseSE3::identity(), 20, 20, Eigen::Vector3d::Zero());
    for (std::size_t i = 0; i < a.data().size(); ++i) REQUIRE(std::abs(a.data()[i] - b.data()[i]) < 1e-6);
  }
}

TEST_CASE("equal-depth opaque splats that do not overlap commute") {
  const auto cam = small_camera(32, 40);
  GaussianSet set(2);
  set[0].position = {-0.5, 0, 3};
  set[1].position = {0.5, 0, 3};
  for (auto& g : set) {
    g.scale = 0.02;
    g.opacity = 1;
  }
  set[0].color = {1, 0, 0};
  set[1].color = {0, 0, 1};
  RenderOptions opt{3.0};
  const FeatureMap a = render(set, cam, PoseSE3::identity(), 32, 32, Eigen::Vector3d::Zero(), opt);
  std::swap(set[0], set[1]);
  CHECK(render(set, cam, PoseSE3::identity(), 32, 32, Eigen::Vector3d::Zero(), opt) == a);
}

TEST_CASE("invalid gaussians and poses are rejected") {
  const auto cam = small_camera(8, 8);
  GaussianSet set(1);
  set[0].scale = 0;
  CHECK_THROWS_AS(render(set, cam, PoseSE3::identity(), 8, 8, Eigen::Vector3d::Zero()), Error);
  set[0].scale = 0.1;
  set[0].opacity = 1.5;
  CHECK_THROWS_AS(render(set, cam, PoseSE3::identity(), 8, 8, Eigen::Vector3d::Zero()), Error);
  set[0].opacity = 1;
  PoseSE3 bad;
  bad.rotation(0, 0) = 2;
  CHECK_THROWS_AS(render(set, cam, bad, 8, 8, Eigen::Vector3d::Zero()), Error);
}

TEST_CASE("photometric loss closed forms") {
  std::mt19937_64 rng(3);
  const FeatureMap img = testing::random_map(rng, 16, 16, 3, 0, 1);
  CHECK(photometric_loss(img, img) == 0.0);
  CHECK(kLambda == 0.2);

  // Constant images: SSIM = (2 mu_a mu_b + C1) / (mu_a^2 + mu_b^2 + C1), variances vanish.
  const FeatureMap a(16, 16, 3, 0.3);
  const FeatureMap b(16, 16, 3, 0.5);
  const double c1 = 1e-4;
  const double s = (2 * 0.3 * 0.5 + c1) / (0.09 + 0.25 + c1);
  CHECK(photometric_loss(a, b) == doctest::Approx(0.2 + 0.2 * (1 - s)).epsilon(1e-12));
  CHECK(photometric_loss(a, b, 0.0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(photometric_loss(a, b) >= 0.0);
  CHECK_THROWS_AS(photometric_loss(a, FeatureMap(8, 16, 3)), Error);
}

TEST_CASE("analytic gradients match central finite differences") {
  const double worst = fd_gradient_worst(2024, 50);
  MESSAGE("worst relative gradient error " << worst);
  CHECK(worst < 1e-3);
}

TEST_CASE("zero-opacity gaussian has zero color gradient") {
  std::mt19937_64 rng(5);
  GaussianSet set = random_set(rng, 3);
  set[1].opacity = 0;
  const auto cam = small_camera(16, 18);
  PoseSE3 pose;
  pose.translation = {0, 0, 3};
  const FeatureMap target = testing::random_map(rng, 16, 16, 3, 0, 1);
  std::vector<GaussianGrad> grads;
  loss_and_gradients(set, cam, pose, target, Eigen::Vector3d::Zero(), kLambda, {}, grads);
  CHECK(grads[1].color == Eigen::Vector3d::Zero());
  CHECK(grads[0].color != Eigen::Vector3d::Zero());
}

TEST_CASE("identical render and target give zero L1 gradient") {
  std::mt19937_64 rng(6);
  const GaussianSet set = random_set(rng, 4);
  const auto cam = small_camera(16, 18);
  PoseSE3 pose;
  pose.translation = {0, 0, 3};
  const FeatureMap target = render(set, cam, pose, 16, 16, Eigen::Vector3d::Zero());
  std::vector<GaussianGrad> grads;
  CHECK(loss_and_gradients(set, cam, pose, target, Eigen::Vector3d::Zero(), 0.0, {}, grads) == 0.0);
  for (const auto& g : grads) {
    CHECK(g.position == Eigen::Vector3d::Zero());
    CHECK(g.color == Eigen::Vector3d::Zero());
    CHECK(g.scale == 0.0);
    CHECK(g.opacity == 0.0);
  }
}

TEST_CASE("gaussian sets round-trip through TXF") {
  testing::TempDir dir("splat");
  GaussianSet set(3);
  for (int i = 0; i < 3; ++i) {
    set[i].position = {0.5 * i, -0.25, 1.0 + i};
    set[i].scale = 0.125;
    set[i].color = {0.25, 0.5, 0.75};
    set[i].opacity = 0.5;
  }
  write_gaussians(set, dir.path() / "g.txf");
  const GaussianSet back = read_gaussians(dir.path() / "g.txf");
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back[i].position == set[i].position);
    CHECK(back[i].scale == set[i].scale);
    CHECK(back[i].color == set[i].color);
    CHECK(back[i].opacity == set[i].opacity);
  }
}

TEST_CASE("optimize keeps a fixed point and reduces a perturbed single gaussian") {
  const auto cam = small_camera(24, 30);
  GaussianSet truth(1);
  truth[0].position = {0.1, -0.05, 0};
  truth[0].scale = 0.15;
  truth[0].color = {0.9, 0.3, 0.2};
  truth[0].opacity = 0.9;
  std::vector<PoseSE3> poses(2);
  poses[0].translation = {0, 0, 3};
  poses[1].rotation = Eigen::AngleAxisd(0.4, Eigen::Vector3d::UnitY()).toRotationMatrix();
  poses[1].translation = {0, 0, 3};
  std::vector<CameraModel> cams{cam, cam};
  std::vector<FeatureMap> frames;
  for (const auto& p : poses) frames.push_back(render(truth, cam, p, 24, 24, Eigen::Vector3d::Zero()));

  OptimizeOptions o;
  o.iterations = 20;
  o.render.cutoff_sigmas = 0;
  const auto fixed = optimize(truth, frames, cams, poses, o);
  CHECK(fixed.state.loss_history.front() == 0.0);
  CHECK(fixed.state.best_loss == 0.0);

  GaussianSet init = truth;
  init[0].position += Eigen::Vector3d(0.08, 0.05, 0.0);
  init[0].scale = 0.1;
  init[0].color = {0.5, 0.5, 0.5};
  init[0].opacity = 0.6;
  o.iterations = 2000;
  const auto res = optimize(init, frames, cams, poses, o);
  MESSAGE("loss " << res.state.loss_history.front() << " -> " << res.state.best_loss);
  CHECK(res.state.best_loss < 0.1 * res.state.loss_history.front());
  CHECK(res.state.iterations == 2000);
  CHECK(res.state.loss_history.size() == 2001);
  CHECK(res.state.warnings.empty());
}

TEST_CASE("optimize warns on one view and reports divergence") {
  const auto cam = small_camera(16, 18);
  GaussianSet set(1);
  set[0].position = {0, 0, 0};
  PoseSE3 pose;
  pose.translation = {0, 0, 3};
  std::vector<FeatureMap> frames{FeatureMap(16, 16, 3, 0.2)};
  std::vector<CameraModel> cams{cam};
  std::vector<PoseSE3> poses{pose};
  OptimizeOptions o;
  o.iterations = 3;
  const auto res = optimize(set, frames, cams, poses, o);
  REQUIRE(res.state.warnings.size() == 1);
  CHECK(res.state.warnings[0].find("single view") != std::string::npos);

  frames[0].at(3, 3, 1) = std::nan("");
  OptState partial;
  try {
    optimize(set, frames, cams, poses, o, &partial);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Divergence);
  }
  CHECK(partial.loss_history.empty());
  CHECK_THROWS_AS(optimize(set, frames, cams, {}, o), Error);
}

TEST_CASE("crop_recenter centres the masked region") {
  FeatureMap img(20, 20, 3);
  BinaryMask mask(20, 20);
  for (int y = 2; y < 6; ++y) {
    for (int x = 12; x < 18; ++x) {
      mask.set(y, x, true);
      img.at(y, x, 0) = 1;
    }
  }
  const auto r = crop_recenter(img, mask, 10, 10, Eigen::Vector3d(0, 0, 0.5));
  CHECK(r.mask.count() == 24);
  CHECK(r.mask(3, 2));
  CHECK(r.mask(6, 7));
  CHECK(!r.mask(2, 2));
  CHECK(r.image.at(0, 0, 2) == 0.5);
  CHECK(r.image.at(4, 4, 0) == 1.0);
}

TEST_CASE("cube scene is deterministic and covers the object") {
  CubeSpec s;
  s.frames = 2;
  const auto a = make_cube_scene(s);
  const auto b = make_cube_scene(s);
  CHECK(a.frames == b.frames);
  CHECK(a.masks[0].count() > 400);
  CHECK(a.masks[0].count() < 64 * 64 / 2);
  CHECK(init_on_cube(10, 1.0, 3).size() == 10);
}
