#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amodal/engine/config.hpp"
#include "amodal/engine/dataset.hpp"
#include "amodal/engine/registry.hpp"
#include "amodal/occlusion/masks.hpp"

namespace amodal::engine {

enum class FrameStatus { Completed, Passthrough, Failed };

const char* to_string(FrameStatus s);

struct FrameRecord {
  int index = 0;
  FrameStatus status = FrameStatus::Completed;
  std::optional<double> occlusion_ratio;  // from the visible and union masks
  std::string error;
  double mask_ms = 0.0;
  double fuse_ms = 0.0;
  double inpaint_ms = 0.0;
  std::string output_digest;
  std::string conditioning_checksum;
};

struct SequenceResult {
  std::vector<FeatureMap> outputs;
  std::vector<MaskBundle> masks;  // empty bundle for frames whose masks failed
  std::vector<FrameRecord> frames;
  nlohmann::json manifest;
};

// For every frame: mask bundle, occlusion-ratio filter (frames outside the
// closed band are copied through), fused latent over the support set,
// masked conditioning latent and enforced-composite completion. Frames are
// processed by cfg.workers threads. With `out_dir` the outputs go to
// out_dir/outputs/%06d.{png,txf} and the manifest to out_dir/manifest.json.
// Throws Backend when more than cfg.failure_budget of the frames failed;
// the manifest is written first.
SequenceResult complete_sequence(const Dataset& dataset, const RunConfig& cfg, BackendSet& backends,
                                 const std::optional<std::filesystem::path>& out_dir = std::nullopt);

// Inputs to the inpainter for one frame; exposed for tests.
CompletionRequest make_request(const Dataset& dataset, const RunConfig& cfg, int t, const MaskBundle& masks,
                               const FeatureMap& z_fused);

bool in_ratio_band(double ratio, const RunConfig& cfg);

std::string tensor_digest(const FeatureMap& map);

}  // namespace amodal::engine
