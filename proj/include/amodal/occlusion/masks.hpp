#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "amodal/occlusion/camera.hpp"
#include "amodal/occlusion/hull.hpp"
#include "amodal/tensor/grid.hpp"

namespace amodal {

inline constexpr double kMinDepth = 1e-6;

// Pinhole projection of the points in front of the camera (z > kMinDepth).
// Clouds larger than `subsample_max` are thinned by a seeded uniform draw
// that keeps the original point order. Throws EmptyProjection when nothing
// survives.
std::vector<Point2> project_points(const PointCloud& cloud, const CameraModel& cam, int subsample_max = 5000,
                                   std::uint64_t seed = 0);

// Pixel (x, y) is set when its centre lies inside `poly` (even-odd rule) or
// on its boundary.
BinaryMask rasterize_polygon(const Polygon2D& poly, int height, int width);

BinaryMask union_mask(const BinaryMask& visible, const BinaryMask& projected);
BinaryMask intersect_mask(const BinaryMask& a, const BinaryMask& b);

// Square structuring element of half-width `radius`, clipped to the image.
BinaryMask dilate(const BinaryMask& mask, int radius);

// (union AND occluder), dilated by `dilation_px`.
BinaryMask occlusion_mask(const BinaryMask& union_, const BinaryMask& occluder, int dilation_px);

// 1 - |visible AND amodal| / |amodal|. Throws EmptyMask for an empty amodal mask.
double occlusion_ratio(const BinaryMask& visible, const BinaryMask& amodal);

// Off-mask pixels become zero.
FeatureMap apply_mask(const FeatureMap& image, const BinaryMask& mask);

struct MaskBundle {
  BinaryMask visible;
  BinaryMask projected;
  BinaryMask union_;
  BinaryMask occluder;
  BinaryMask occlusion;
};

struct MaskOptions {
  int subsample_max = 5000;
  std::uint64_t seed = 0;
  std::optional<double> alpha;  // nullopt: automatic
  int dilation_px = 2;
};

// Projects the cloud, takes its concave hull, rasterizes it and combines the
// result with the 2D masks.
MaskBundle build_mask_bundle(const BinaryMask& visible, const BinaryMask& occluder, const PointCloud& cloud,
                             const CameraModel& cam, const MaskOptions& options = {});

}  // namespace amodal
