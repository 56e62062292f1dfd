#include <doctest.h>

#include <cmath>
#include <numbers>

#include "amodal/error.hpp"
#include "amodal/occlusion/masks.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace amodal;

namespace {

CameraModel pinhole(double f, double cx, double cy) {
  CameraModel cam;
  cam.fx = cam.fy = f;
  cam.cx = cx;
  cam.cy = cy;
  return cam;
}

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidArgument;
}

std::vector<Point2> l_shape(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point2> pts;
  while (static_cast<int>(pts.size()) < n) {
    const double x = 10 * u(rng), y = 10 * u(rng);
    if (x < 4 || y < 4) pts.push_back({x, y});
  }
  return pts;
}

}  // namespace

TEST_CASE("project_points") {
  const CameraModel cam = pinhole(100, 50, 40);
  const auto on_axis = project_points({Eigen::Vector3d(0, 0, 2)}, cam);
  REQUIRE(on_axis.size() == 1);
  CHECK(on_axis[0] == Point2{50, 40});
  CHECK(project_points({Eigen::Vector3d(1, 0, 2)}, cam)[0].x == 100.0);

  CHECK(code_of([&] { project_points({Eigen::Vector3d(0, 0, -1), Eigen::Vector3d(1, 1, -1)}, cam); }) ==
        ErrorCode::EmptyProjection);
  CHECK(project_points({Eigen::Vector3d(0, 0, -1), Eigen::Vector3d(0, 0, 1)}, cam).size() == 1);

  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> u(-1, 1);
  PointCloud cloud;
  for (int i = 0; i < 12000; ++i) cloud.emplace_back(u(rng), u(rng), 3 + u(rng));
  const auto a = project_points(cloud, cam);
  CHECK(a.size() == 5000);
  CHECK(a == project_points(cloud, cam));
  for (const auto& p : a) CHECK((std::isfinite(p.x) && std::isfinite(p.y)));
  CHECK(project_points(cloud, cam, 10).size() == 10);

  CameraModel moved = cam;
  moved.extrinsics.translation = Eigen::Vector3d(0, 0, 2);
  CHECK(project_points({Eigen::Vector3d(1, 0, 0)}, moved)[0].x == 100.0);
}

TEST_CASE("delaunay is locally Delaunay and covers the hull") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0, 50);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Point2> pts;
    for (int i = 0; i < 300; ++i) pts.push_back({std::round(u(rng)), u(rng)});
    const Triangulation tri = delaunay(pts);
    double area = 0;
    for (const auto& t : tri.triangles) {
      std::vector<Point2> ring{tri.vertices[t[0]], tri.vertices[t[1]], tri.vertices[t[2]]};
      const double a = testing::shoelace(ring);
      CHECK(a > 0);
      area += a;
    }
    CHECK(std::abs(area - testing::shoelace(testing::gift_wrap(tri.vertices))) < 1e-6 * area);
    for (std::size_t t = 0; t < tri.triangles.size(); ++t) {
      for (int i = 0; i < 3; ++i) {
        const int n = tri.neighbors[t][i];
        if (n < 0) continue;
        int opposite = -1;
        for (int v : tri.triangles[static_cast<std::size_t>(n)]) {
          if (v != tri.triangles[t][(i + 1) % 3] && v != tri.triangles[t][(i + 2) % 3]) opposite = v;
        }
        const auto& a = tri.vertices[tri.triangles[t][0]];
        const auto& b = tri.vertices[tri.triangles[t][1]];
        const auto& c = tri.vertices[tri.triangles[t][2]];
        const auto& d = tri.vertices[static_cast<std::size_t>(opposite)];
        const double R = circumradius(a, b, c);
        // circumcentre
        const double D = 2 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
        const double ux = ((a.x * a.x + a.y * a.y) * (b.y - c.y) + (b.x * b.x + b.y * b.y) * (c.y - a.y) +
                           (c.x * c.x + c.y * c.y) * (a.y - b.y)) / D;
        const double uy = ((a.x * a.x + a.y * a.y) * (c.x - b.x) + (b.x * b.x + b.y * b.y) * (a.x - c.x) +
                           (c.x * c.x + c.y * c.y) * (b.x - a.x)) / D;
        CHECK(std::hypot(d.x - ux, d.y - uy) >= R * (1 - 1e-7));
      }
    }
  }
  CHECK(code_of([] { delaunay(std::vector<Point2>{{0, 0}, {1, 1}, {2, 2}, {3, 3}}); }) ==
        ErrorCode::DegenerateGeometry);
  CHECK(code_of([] { delaunay(std::vector<Point2>{{0, 0}, {1, 1}}); }) == ErrorCode::DegenerateGeometry);
}

TEST_CASE("concave hull basic cases") {
  const std::vector<Point2> tri{{0, 0}, {4, 0}, {1, 3}};
  const HullResult h = concave_hull(tri);
  REQUIRE(h.polygon.rings.size() == 1);
  CHECK(h.polygon.rings[0].size() == 3);
  CHECK(h.polygon.area() == doctest::Approx(6.0));

  std::mt19937_64 rng(22);
  const auto pts = l_shape(rng, 1500);
  const HullResult convex = concave_hull(pts, 0.0);
  CHECK(convex.polygon.area() == doctest::Approx(testing::shoelace(testing::gift_wrap(pts))));

  const HullResult autoh = concave_hull(pts);
  CHECK_FALSE(autoh.convex_fallback);
  CHECK(autoh.alpha > 0);
  CHECK(autoh.polygon.area() < 0.8 * convex.polygon.area());
  CHECK(autoh.polygon.area() > 0.6 * convex.polygon.area());
  int inside = 0;
  for (const auto& p : pts) inside += point_in_polygon(autoh.polygon, p);
  CHECK(inside == static_cast<int>(pts.size()));

  CHECK(code_of([] { concave_hull(std::vector<Point2>{{0, 0}, {1, 0}, {2, 0}}); }) == ErrorCode::DegenerateGeometry);
}

TEST_CASE("concave hull auto rule on random sets") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Point2> pts;
    const int n = 20 + static_cast<int>(u(rng) * 400);
    for (int i = 0; i < n; ++i) {
      const double r = 20 * std::sqrt(u(rng)), a = 2 * std::numbers::pi * u(rng);
      pts.push_back({r * std::cos(a) + (trial % 3) * r, r * std::sin(a)});
    }
    const HullResult h = concave_hull(pts);
    int covered = 0;
    for (const auto& p : pts) covered += point_in_polygon(h.polygon, p);
    CHECK(covered >= 0.99 * n);
    CHECK(h.polygon.area() <= testing::shoelace(testing::gift_wrap(pts)) * (1 + 1e-12));
    CHECK(h.polygon.area() > 0);
  }
}

TEST_CASE("rasterize polygon") {
  Polygon2D rect{{{{1.5, 2.5}, {5.5, 2.5}, {5.5, 5.5}, {1.5, 5.5}}}};
  const BinaryMask m = rasterize_polygon(rect, 10, 10);
  CHECK(m.count() == 12);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 10; ++x) {
      CHECK(m(y, x) == testing::inside_even_odd(rect, x, y));
      CHECK(m(y, x) == (x >= 2 && x <= 5 && y >= 3 && y <= 5));
    }
  }
  CHECK(rasterize_polygon(Polygon2D{{{{20, 20}, {30, 20}, {30, 30}}}}, 8, 8).none());
  CHECK(rasterize_polygon(Polygon2D{{{{-0.5, -0.5}, {7.5, -0.5}, {7.5, 7.5}, {-0.5, 7.5}}}}, 8, 8).count() == 64);

  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> u(-5, 25);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Point2> pts;
    for (int i = 0; i < 30; ++i) pts.push_back({u(rng), u(rng)});
    const HullResult h = concave_hull(pts);
    const BinaryMask r = rasterize_polygon(h.polygon, 20, 20);
    for (int y = 0; y < 20; ++y) {
      for (int x = 0; x < 20; ++x) CHECK(r(y, x) == testing::inside_even_odd(h.polygon, x, y));
    }
  }
}

TEST_CASE("hull of rasterized convex shapes reproduces them") {
  for (int k = 0; k < 6; ++k) {
    BinaryMask shape(64, 64);
    const double cx = 20 + 4 * k, cy = 30 - 2 * k, r = 8 + 2 * k;
    std::vector<Point2> centres;
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        const bool in = k % 2 ? std::hypot(x - cx, (y - cy) * 1.4) <= r : std::abs(x - cx) + std::abs(y - cy) <= r;
        shape.set(y, x, in);
        if (in) centres.push_back({static_cast<double>(x), static_cast<double>(y)});
      }
    }
    const BinaryMask back = rasterize_polygon(concave_hull(centres).polygon, 64, 64);
    CHECK(testing::mask_iou(back, shape) >= 0.95);
  }
}

TEST_CASE("mask algebra") {
  BinaryMask a(6, 6), b(6, 6);
  for (int x = 0; x < 5; ++x) a.set(0, x, true);
  for (int x = 0; x < 6; ++x) b.set(3, x, true);
  b.set(4, 0, true);
  CHECK(union_mask(a, b).count() == 12);
  CHECK(union_mask(a, BinaryMask(6, 6)) == a);
  CHECK(union_mask(a, a) == a);
  CHECK_THROWS_AS(union_mask(a, BinaryMask(5, 6)), Error);

  CHECK(occlusion_mask(a, b, 2).none());
  CHECK(occlusion_mask(a, BinaryMask(6, 6, true), 0) == a);

  BinaryMask one(6, 6), occ(6, 6, true);
  one.set(0, 5, true);
  const BinaryMask d = occlusion_mask(one, occ, 1);
  CHECK(d.count() == 4);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) CHECK(d(y, x) == (y <= 1 && x >= 4));
  }
  one.set(0, 5, false);
  one.set(3, 3, true);
  CHECK(occlusion_mask(one, occ, 1).count() == 9);
}

TEST_CASE("occlusion ratio and apply_mask") {
  BinaryMask amodal(10, 10);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 10; ++x) amodal.set(y, x, true);
  }
  BinaryMask vis(10, 10);
  for (int i = 0; i < 40; ++i) vis.set(i / 10, i % 10, true);
  CHECK(occlusion_ratio(vis, amodal) == doctest::Approx(0.6));
  CHECK(occlusion_ratio(amodal, amodal) == 0.0);
  CHECK(occlusion_ratio(BinaryMask(10, 10), amodal) == 1.0);
  CHECK(code_of([&] { occlusion_ratio(vis, BinaryMask(10, 10)); }) == ErrorCode::EmptyMask);

  const FeatureMap img(4, 4, 3, 0.8);
  CHECK(apply_mask(img, BinaryMask(4, 4, true)) == img);
  const FeatureMap black = apply_mask(img, BinaryMask(4, 4));
  for (double v : black.data()) CHECK(v == 0.0);
  BinaryMask half(4, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 2; ++x) half.set(y, x, true);
  }
  double mean = 0;
  const FeatureMap halved = apply_mask(img, half);
  for (double v : halved.data()) mean += v;
  CHECK(mean / 48 == doctest::Approx(0.4));
}

TEST_CASE("mask bundle subset chain") {
  std::mt19937_64 rng(25);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  const CameraModel cam = pinhole(60, 31.5, 31.5);
  for (int trial = 0; trial < 10; ++trial) {
    PointCloud cloud;
    for (int i = 0; i < 800; ++i) cloud.emplace_back(u(rng), u(rng), 2 + u(rng));
    const BinaryMask vis = testing::random_mask(rng, 64, 64, 0.1);
    const BinaryMask occ = testing::random_mask(rng, 64, 64, 0.4);
    MaskOptions opt;
    opt.dilation_px = 0;
    const MaskBundle b = build_mask_bundle(vis, occ, cloud, cam, opt);
    CHECK(intersect_mask(b.occlusion, b.occluder) == b.occlusion);
    CHECK(intersect_mask(b.occlusion, b.union_) == b.occlusion);
    CHECK(intersect_mask(b.visible, b.union_) == b.visible);
    CHECK(intersect_mask(b.projected, b.union_) == b.projected);
    CHECK(b.projected.count() > 100);
  }
}
