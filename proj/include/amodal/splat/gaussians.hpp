#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "amodal/occlusion/camera.hpp"
#include "amodal/tensor/grid.hpp"

namespace amodal::splat {

inline constexpr double kLambda = 0.2;  // weight of the SSIM term

struct Gaussian3D {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // m, object frame
  double scale = 0.05;                                 // m, isotropic std
  Eigen::Vector3d color{0.5, 0.5, 0.5};
  double opacity = 1.0;

  // Throws InvalidArgument unless scale > 0, opacity and color in [0, 1].
  void validate() const;
};

using GaussianSet = std::vector<Gaussian3D>;

// TXF N x 8 f32 rows: position(3), scale, color(3), opacity.
void write_gaussians(const GaussianSet& set, const std::filesystem::path& path);
GaussianSet read_gaussians(const std::filesystem::path& path);

struct RenderOptions {
  // Footprint radius in standard deviations; <= 0 evaluates every pixel.
  double cutoff_sigmas = 0.0;
};

// Each centre goes through `pose` (object -> world) and the camera
// extrinsics, is projected by the pinhole model and splatted as an isotropic
// 2D Gaussian of std fx * s / z. Splats are composited back to front over
// the background; equal depths keep index order. Points with z <= kMinDepth
// are skipped.
FeatureMap render(const GaussianSet& set, const CameraModel& cam, const PoseSE3& pose, int height, int width,
                  const Eigen::Vector3d& background, const RenderOptions& options = {});

// mean |rendered - target| + lambda * (1 - SSIM(rendered, target))
double photometric_loss(const FeatureMap& rendered, const FeatureMap& target, double lambda = kLambda);

struct GaussianGrad {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double scale = 0.0;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  double opacity = 0.0;
};

// Loss of one view and its analytic gradient, added into `grads` (resized
// to the set when empty). The SSIM term is differentiated exactly; the L1
// term uses sign(0) = 0.
double loss_and_gradients(const GaussianSet& set, const CameraModel& cam, const PoseSE3& pose, const FeatureMap& target,
                          const Eigen::Vector3d& background, double lambda, const RenderOptions& options,
                          std::vector<GaussianGrad>& grads);

enum class Optimizer { GradientDescent, Adam };

struct StepSizes {
  double position = 1e-3;
  double color = 1e-2;
  double opacity = 1e-2;
  double scale = 1e-3;
};

struct OptimizeOptions {
  int iterations = 2000;
  double lambda = kLambda;
  StepSizes steps;
  Optimizer optimizer = Optimizer::Adam;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  RenderOptions render{3.5};
};

struct OptState {
  int iterations = 0;
  StepSizes steps;
  std::string optimizer;
  std::string ssim_gradient = "analytic";
  std::vector<double> loss_history;  // mean loss over views, before each step
  double best_loss = 0.0;
  int best_iteration = 0;
  std::vector<std::string> warnings;
};

struct OptResult {
  GaussianSet gaussians;  // best-so-far snapshot
  OptState state;
};

// Minimises the mean photometric loss over the views. Gradients are summed
// in view order. After each step opacity and color are clamped to [0, 1]
// and scale to >= 1e-4. A non-finite loss throws Divergence; `state_out`
// then holds the state up to that point.
OptResult optimize(const GaussianSet& init, std::span<const FeatureMap> frames, std::span<const CameraModel> cams,
                   std::span<const PoseSE3> poses, const OptimizeOptions& options = {},
                   OptState* state_out = nullptr);

// Crops tight_bbox(mask, 1.0) and pastes it centred into a canvas filled
// with `background`; content larger than the canvas is cropped about its
// centre. A source pixel (x, y) lands at (x + dx, y + dy), so shifting the
// principal point by (dx, dy) keeps the camera consistent.
struct Recentred {
  FeatureMap image;
  BinaryMask mask;
  int dx = 0;
  int dy = 0;
};
Recentred crop_recenter(const FeatureMap& image, const BinaryMask& mask, int height, int width,
                        const Eigen::Vector3d& background = Eigen::Vector3d::Zero());

// Ray-cast unit cube scene for the reconstruction benchmark.
struct CubeSpec {
  int size = 64;
  double focal = 96.0;
  double edge = 1.0;  // m
  double depth = 4.0;
  int frames = 5;
  int supersample = 4;
  double yaw_step = 0.3;  // rad / frame
  double pitch = 0.45;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
};

struct CubeScene {
  std::vector<FeatureMap> frames;
  std::vector<BinaryMask> masks;
  std::vector<CameraModel> cams;
  std::vector<PoseSE3> poses;
};

CubeScene make_cube_scene(const CubeSpec& spec);

// Seeded initialisation: centres near the surface of an axis-aligned cube
// of the given edge, grey, half opaque.
GaussianSet init_on_cube(int count, double edge, std::uint64_t seed);

}  // namespace amodal::splat
