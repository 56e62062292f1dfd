#include "amodal/engine/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <regex>

#include <fmt/format.h>

#include "amodal/error.hpp"
#include "amodal/tensor/image_io.hpp"
#include "amodal/tensor/txf.hpp"

namespace amodal::engine {

namespace fs = std::filesystem;

namespace {

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, fmt::format("missing {}", path.string()));
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Schema, fmt::format("{}: {}", path.string(), e.what()));
  }
}

template <typename T, typename Load>
std::vector<T> load_all(const fs::path& dir, const std::string& ext, int expected, Load load) {
  const auto files = indexed_files(dir, ext);
  if (expected >= 0 && static_cast<int>(files.size()) != expected) {
    throw Error(ErrorCode::Schema, fmt::format("{} holds {} files, expected {}", dir.string(), files.size(), expected));
  }
  std::vector<T> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load(f));
  return out;
}

}  // namespace

std::vector<fs::path> indexed_files(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, fmt::format("missing directory {}", dir.string()));
  static const std::regex pattern(R"(^(\d{6})\.([a-z]+)$)");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && std::regex_match(name, m, pattern) && m[2] == ext) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (files[i].filename().string() != fmt::format("{:06d}.{}", i, ext)) {
      throw Error(ErrorCode::Schema, fmt::format("{}: expected {:06d}.{} in sequence, found {}", dir.string(), i, ext,
                                                 files[i].filename().string()));
    }
  }
  return files;
}

PointCloud read_point_cloud(const fs::path& path) {
  const Tensor t = read_tensor(path);
  if (t.dims.size() != 2 || t.dims[1] != 3) {
    throw Error(ErrorCode::Schema, fmt::format("{}: point cloud must be N x 3", path.string()));
  }
  PointCloud cloud(t.dims[0]);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    cloud[i] = {t.values[3 * i], t.values[3 * i + 1], t.values[3 * i + 2]};
    if (!cloud[i].allFinite()) throw Error(ErrorCode::NonFinite, fmt::format("{}: point {} not finite", path.string(), i));
  }
  return cloud;
}

GroundTruth load_ground_truth(const fs::path& root, int frames) {
  GroundTruth gt;
  const fs::path g = root / "gt";
  gt.complete = load_all<FeatureMap>(g / "complete", "png", frames, [](const fs::path& p) { return read_png_rgb(p); });
  gt.amodal = load_all<BinaryMask>(g / "amodal", "png", frames, [](const fs::path& p) { return read_png_mask(p); });
  if (fs::is_directory(g / "flows")) {
    // Flow files start at 000001; 000000 would be the (absent) flow into frame -1.
    std::vector<fs::path> flows;
    for (const auto& entry : fs::directory_iterator(g / "flows")) {
      if (entry.path().extension() == ".txf") flows.push_back(entry.path());
    }
    std::sort(flows.begin(), flows.end());
    bool complete = static_cast<int>(flows.size()) == std::max(0, frames - 1);
    for (std::size_t i = 0; complete && i < flows.size(); ++i) {
      complete = flows[i].filename().string() == fmt::format("{:06d}.txf", i + 1);
    }
    if (complete) {
      for (const auto& f : flows) gt.flows.push_back(read_flow_field(f));
    }
  }
  if (fs::exists(g / "scene.json")) gt.scene = read_json_file(g / "scene.json");
  if (fs::exists(g / "poses.json")) {
    const auto poses = read_json_file(g / "poses.json");
    if (!poses.is_array()) throw Error(ErrorCode::Schema, "gt/poses.json must be an array");
    for (std::size_t i = 0; i < poses.size(); ++i) {
      try {
        gt.poses.push_back(pose_from_json(poses[i]));
      } catch (const Error& e) {
        throw Error(ErrorCode::Schema, fmt::format("gt/poses.json frame {}: {}", i, e.what()));
      }
    }
  }
  return gt;
}

Dataset load_dataset(const fs::path& root) {
  Dataset d;
  d.root = root;
  d.frames = load_all<FeatureMap>(root / "frames", "png", -1, [](const fs::path& p) { return read_png_rgb(p); });
  const int n = d.size();
  if (n == 0) throw Error(ErrorCode::Schema, fmt::format("{}: no frames", (root / "frames").string()));
  d.visible = load_all<BinaryMask>(root / "masks/visible", "png", n, [](const fs::path& p) { return read_png_mask(p); });
  d.occluder = load_all<BinaryMask>(root / "masks/occluder", "png", n, [](const fs::path& p) { return read_png_mask(p); });
  d.clouds = load_all<PointCloud>(root / "points", "txf", n, read_point_cloud);
  for (int t = 0; t < n; ++t) {
    const auto i = static_cast<std::size_t>(t);
    const auto& f = d.frames[i];
    if (f.height() != d.frames[0].height() || f.width() != d.frames[0].width()) {
      throw Error(ErrorCode::Schema, fmt::format("frame {} size differs from frame 0", t));
    }
    for (const BinaryMask* m : {&d.visible[i], &d.occluder[i]}) {
      if (m->height() != f.height() || m->width() != f.width()) {
        throw Error(ErrorCode::Schema, fmt::format("mask of frame {} does not match the frame size", t));
      }
    }
  }
  try {
    d.camera = camera_from_json(read_json_file(root / "camera.json"));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) throw;
    throw Error(ErrorCode::Schema, fmt::format("camera.json: {}", e.what()));
  }
  std::ifstream prompt(root / "prompt.txt");
  if (!prompt) throw Error(ErrorCode::Io, fmt::format("missing {}", (root / "prompt.txt").string()));
  std::getline(prompt, d.prompt);
  if (fs::is_directory(root / "gt")) d.gt = load_ground_truth(root, n);
  return d;
}

}  // namespace amodal::engine
