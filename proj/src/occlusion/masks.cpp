#include "amodal/occlusion/masks.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <random>

#include <fmt/format.h>

#include "amodal/error.hpp"

namespace amodal {

namespace {

void require_same(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("{}: mask {}x{} vs {}x{}", what, a.height(), a.width(), b.height(), b.width()));
  }
}

}  // namespace

std::vector<Point2> project_points(const PointCloud& cloud, const CameraModel& cam, int subsample_max,
                                   std::uint64_t seed) {
  if (subsample_max < 3) throw Error(ErrorCode::InvalidArgument, "project_points: subsample_max must be >= 3");
  cam.validate();
  std::vector<Eigen::Vector3d> front;
  front.reserve(cloud.size());
  for (const auto& p : cloud) {
    if (!p.allFinite()) throw Error(ErrorCode::NonFinite, "project_points: non-finite point");
    const Eigen::Vector3d xc = cam.extrinsics.apply(p);
    if (xc.z() > kMinDepth) front.push_back(xc);
  }
  if (front.empty()) throw Error(ErrorCode::EmptyProjection, "project_points: every point is behind the camera");

  if (front.size() > static_cast<std::size_t>(subsample_max)) {
    std::vector<Eigen::Vector3d> kept;
    kept.reserve(static_cast<std::size_t>(subsample_max));
    std::mt19937_64 rng(seed);
    std::sample(front.begin(), front.end(), std::back_inserter(kept), subsample_max, rng);
    front = std::move(kept);
  }

  std::vector<Point2> out;
  out.reserve(front.size());
  for (const auto& xc : front) {
    out.push_back({cam.fx * xc.x() / xc.z() + cam.cx, cam.fy * xc.y() / xc.z() + cam.cy});
  }
  return out;
}

BinaryMask rasterize_polygon(const Polygon2D& poly, int height, int width) {
  if (height < 1 || width < 1) throw Error(ErrorCode::InvalidArgument, "rasterize_polygon: dims must be >= 1");
  BinaryMask mask(height, width);
  std::vector<double> crossings;
  for (int y = 0; y < height; ++y) {
    const double py = y;
    crossings.clear();
    for (const auto& ring : poly.rings) {
      for (std::size_t i = 0; i < ring.size(); ++i) {
        const Point2& a = ring[i];
        const Point2& b = ring[(i + 1) % ring.size()];
        if ((a.y > py) != (b.y > py)) crossings.push_back(a.x + (py - a.y) * (b.x - a.x) / (b.y - a.y));
      }
    }
    std::sort(crossings.begin(), crossings.end());
    for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
      const double lo = std::max(0.0, std::ceil(crossings[k]));
      const double hi = std::min(static_cast<double>(width - 1), std::floor(crossings[k + 1]));
      for (int x = static_cast<int>(lo); x <= static_cast<int>(hi); ++x) mask.set(y, x, true);
    }
  }
  // Centres lying exactly on an edge count as inside.
  constexpr double eps = 1e-9;
  for (const auto& ring : poly.rings) {
    for (std::size_t i = 0; i < ring.size(); ++i) {
      const Point2& a = ring[i];
      const Point2& b = ring[(i + 1) % ring.size()];
      if (a.y == b.y) {
        if (std::abs(a.y - std::round(a.y)) > eps) continue;
        const int y = static_cast<int>(std::round(a.y));
        if (y < 0 || y >= height) continue;
        const int x0 = std::max(0, static_cast<int>(std::ceil(std::min(a.x, b.x) - eps)));
        const int x1 = std::min(width - 1, static_cast<int>(std::floor(std::max(a.x, b.x) + eps)));
        for (int x = x0; x <= x1; ++x) mask.set(y, x, true);
        continue;
      }
      const int y0 = std::max(0, static_cast<int>(std::ceil(std::min(a.y, b.y) - eps)));
      const int y1 = std::min(height - 1, static_cast<int>(std::floor(std::max(a.y, b.y) + eps)));
      for (int y = y0; y <= y1; ++y) {
        const double x = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
        const double rx = std::round(x);
        if (std::abs(x - rx) <= eps && rx >= 0 && rx < width) mask.set(y, static_cast<int>(rx), true);
      }
    }
  }
  return mask;
}

BinaryMask union_mask(const BinaryMask& visible, const BinaryMask& projected) {
  require_same(visible, projected, "union_mask");
  BinaryMask out = visible;
  auto dst = out.bits();
  const auto src = projected.bits();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = dst[i] | src[i];
  return out;
}

BinaryMask intersect_mask(const BinaryMask& a, const BinaryMask& b) {
  require_same(a, b, "intersect_mask");
  BinaryMask out = a;
  auto dst = out.bits();
  const auto src = b.bits();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = dst[i] & src[i];
  return out;
}

BinaryMask dilate(const BinaryMask& mask, int radius) {
  if (radius < 0) throw Error(ErrorCode::InvalidArgument, "dilate: radius must be >= 0");
  if (radius == 0) return mask;
  const int h = mask.height();
  const int w = mask.width();
  BinaryMask rows(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask(y, x)) continue;
      for (int xx = std::max(0, x - radius); xx <= std::min(w - 1, x + radius); ++xx) rows.set(y, xx, true);
    }
  }
  BinaryMask out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!rows(y, x)) continue;
      for (int yy = std::max(0, y - radius); yy <= std::min(h - 1, y + radius); ++yy) out.set(yy, x, true);
    }
  }
  return out;
}

BinaryMask occlusion_mask(const BinaryMask& union_, const BinaryMask& occluder, int dilation_px) {
  require_same(union_, occluder, "occlusion_mask");
  if (dilation_px < 0) throw Error(ErrorCode::InvalidArgument, "occlusion_mask: dilation must be >= 0");
  return dilate(intersect_mask(union_, occluder), dilation_px);
}

double occlusion_ratio(const BinaryMask& visible, const BinaryMask& amodal) {
  require_same(visible, amodal, "occlusion_ratio");
  const std::size_t total = amodal.count();
  if (total == 0) throw Error(ErrorCode::EmptyMask, "occlusion_ratio: amodal mask is empty");
  const std::size_t seen = intersect_mask(visible, amodal).count();
  return 1.0 - static_cast<double>(seen) / static_cast<double>(total);
}

FeatureMap apply_mask(const FeatureMap& image, const BinaryMask& mask) {
  if (image.height() != mask.height() || image.width() != mask.width()) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("apply_mask: image {}x{} vs mask {}x{}", image.height(), image.width(), mask.height(),
                            mask.width()));
  }
  FeatureMap out = image;
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      if (mask(y, x)) continue;
      auto px = out.pixel(y, x);
      std::fill(px.begin(), px.end(), 0.0);
    }
  }
  return out;
}

MaskBundle build_mask_bundle(const BinaryMask& visible, const BinaryMask& occluder, const PointCloud& cloud,
                             const CameraModel& cam, const MaskOptions& options) {
  require_same(visible, occluder, "build_mask_bundle");
  const auto points = project_points(cloud, cam, options.subsample_max, options.seed);
  const HullResult hull = concave_hull(points, options.alpha);
  MaskBundle b;
  b.visible = visible;
  b.occluder = occluder;
  b.projected = rasterize_polygon(hull.polygon, visible.height(), visible.width());
  b.union_ = union_mask(visible, b.projected);
  b.occlusion = occlusion_mask(b.union_, occluder, options.dilation_px);
  return b;
}

}  // namespace amodal
