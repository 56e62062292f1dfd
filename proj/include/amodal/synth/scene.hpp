#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "amodal/occlusion/camera.hpp"
#include "amodal/tensor/grid.hpp"

namespace amodal::synth {

enum class ObjectShape { Rect, Disc, LShape };
enum class OccluderShape { Rect, Disc, Limb };

// In-plane rigid motion. Positions are pixel coordinates of the shape centre
// (at the object's front depth); angles rotate about the optical axis.
struct Trajectory {
  Eigen::Vector2d start = Eigen::Vector2d::Zero();
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();  // px / frame
  double angle = 0.0;                                  // rad
  double spin = 0.0;                                   // rad / frame

  Eigen::Vector2d centre(int t) const { return start + velocity * t; }
  double angle_at(int t) const { return angle + spin * t; }
};

// Extruded prism: the 2D shape (size in pixels at the front depth) is swept
// away from the camera by `thickness` metres starting at `depth`.
struct ObjectSpec {
  ObjectShape shape = ObjectShape::Rect;
  double width = 20.0;   // px; disc diameter
  double height = 20.0;  // px
  double depth = 4.0;    // m
  double thickness = 0.2;
  Eigen::Vector3d color{0.85, 0.45, 0.2};
  double texture = 0.3;  // relative modulation amplitude
  Trajectory motion;
};

// Drawn in the image plane in front of the object. The limb is two capsules:
// the first of length `height` from the trajectory centre at angle(t), the
// second continuing from its end, turned by bend + bend_rate * t.
struct OccluderSpec {
  OccluderShape shape = OccluderShape::Rect;
  double width = 10.0;
  double height = 40.0;
  Eigen::Vector3d color{0.2, 0.35, 0.8};
  double texture = 0.3;
  double bend = 0.6;
  double bend_rate = 0.0;
  Trajectory motion;
};

struct SceneSpec {
  int height = 64;
  int width = 64;
  int frames = 10;
  std::uint64_t seed = 0;
  double focal = 64.0;  // px
  int points = 4000;    // per-frame cloud size
  std::string prompt = "box";
  ObjectSpec object;
  OccluderSpec occluder;
  bool has_occluder = true;

  CameraModel camera() const;
};

// Throws Schema with the offending field name.
SceneSpec scene_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SceneSpec& spec);

struct SceneBundle {
  CameraModel camera;
  std::vector<FeatureMap> frames;    // occluded
  std::vector<FeatureMap> complete;  // object on black
  std::vector<BinaryMask> amodal;
  std::vector<BinaryMask> visible;
  std::vector<BinaryMask> occluder;
  std::vector<FlowField> flows;  // flows[t-1]: frame t -> frame t-1, t >= 1
  std::vector<PointCloud> clouds;
  std::vector<PoseSE3> poses;  // object -> camera
};

// Deterministic in the spec. Throws InvalidArgument naming the frame when the
// object leaves the canvas entirely.
SceneBundle generate_scene(const SceneSpec& spec);

// t -> tau sampling field: object pixels of frame t map to where the same
// surface point projects in frame tau; zero elsewhere.
FlowField gt_flow(const SceneSpec& spec, int tau, int t);

// Where the object surface seen at continuous pixel (x, y) of frame t
// projects in frame tau; nullopt when (x, y) misses the object.
std::optional<Eigen::Vector2d> correspond(const SceneSpec& spec, int tau, int t, double x, double y);

// Ray cast of the object alone for frame t.
struct ObjectRender {
  FeatureMap color;
  BinaryMask mask;
};
ObjectRender render_object(const SceneSpec& spec, int t);

struct BlockMatch {
  FlowField flow;
  BinaryMask low_confidence;
};

// Exhaustive SSD search of 5x5 patches: target(p) ~ source(p + flow(p)),
// integer displacements within `radius`, edge-clamped patches. Pixels whose
// patch is flat or whose minimum is not unique are flagged.
BlockMatch block_matching_flow(const FeatureMap& target, const FeatureMap& source, int radius);

// Writes the dataset layout plus the gt/ subtree.
void write_dataset(const SceneSpec& spec, const SceneBundle& bundle, const std::filesystem::path& root);

}  // namespace amodal::synth
