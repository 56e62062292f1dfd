#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amodal/occlusion/camera.hpp"
#include "amodal/tensor/grid.hpp"

namespace amodal::engine {

// Ground truth shipped by the synthetic harness under root/gt/.
struct GroundTruth {
  std::vector<FeatureMap> complete;
  std::vector<BinaryMask> amodal;
  std::vector<FlowField> flows;  // flows[t-1]: frame t -> frame t-1; empty when gt/flows is absent
  std::optional<nlohmann::json> scene;
  std::vector<PoseSE3> poses;
};

// root/frames/%06d.png, root/masks/{visible,occluder}/%06d.png,
// root/points/%06d.txf (N x 3), root/camera.json, root/prompt.txt.
struct Dataset {
  std::filesystem::path root;
  std::vector<FeatureMap> frames;
  std::vector<BinaryMask> visible;
  std::vector<BinaryMask> occluder;
  std::vector<PointCloud> clouds;
  CameraModel camera;
  std::string prompt;
  std::optional<GroundTruth> gt;

  int size() const { return static_cast<int>(frames.size()); }
};

// Throws Io for missing files and Schema for inconsistent content, naming
// the offending path. gt/ is loaded when present.
Dataset load_dataset(const std::filesystem::path& root);

// gt/ subtree alone; complete/ and amodal/ are required, flows/ optional.
GroundTruth load_ground_truth(const std::filesystem::path& root, int frames);

PointCloud read_point_cloud(const std::filesystem::path& path);

// Sorted %06d.<ext> files of a directory; throws Schema on gaps.
std::vector<std::filesystem::path> indexed_files(const std::filesystem::path& dir, const std::string& ext);

}  // namespace amodal::engine
