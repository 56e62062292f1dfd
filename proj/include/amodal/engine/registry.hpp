#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amodal/backend.hpp"
#include "amodal/engine/config.hpp"
#include "amodal/engine/dataset.hpp"

namespace amodal::engine {

// Built-in locators, per role:
//   flow     gt | block[:radius=N] | zero
//   encoder  toy
//   inpaint  oracle[:sigma=S,gated=0|1]
//   segment  threshold[:level=L]
//   embed    toy | recorded:DIR
// Any role also accepts exec:PATH, http://HOST:PORT/PATH, fixture:DIR and
// record:DIR::INNER, which speak the directory protocol.
struct BackendSet {
  std::shared_ptr<FlowBackend> flow;
  std::shared_ptr<EncoderBackend> encoder;
  std::shared_ptr<InpaintBackend> inpaint;
  std::shared_ptr<SegmentBackend> segment;
  std::shared_ptr<Embedder> embed;

  struct Info {
    std::string locator;
    std::string description;
    std::string digest;
  };
  std::map<std::string, Info> info;

  nlohmann::json to_json() const;
};

struct Locator {
  std::string name;
  std::map<std::string, std::string> options;
  bool external = false;
};

// "name:k=v,k=v"; external locators keep everything after the scheme in name.
Locator parse_locator(const std::string& text);

// Instantiates the requested roles. Built-ins that need ground truth (gt
// flow, oracle inpainter) throw MissingCapability without it. External
// request directories go below `workdir` (a temporary directory when empty).
BackendSet make_backends(const RunConfig& cfg, const Dataset* dataset, const std::vector<std::string>& roles,
                         const std::filesystem::path& workdir = {});

// Flow from the harness's analytic correspondences.
class GroundTruthFlow : public FlowBackend {
 public:
  explicit GroundTruthFlow(nlohmann::json scene);
  FlowField flow(const FlowQuery& query) override;
  std::string describe() const override { return "gt-flow"; }

 private:
  nlohmann::json scene_;
};

class BlockMatchingFlow : public FlowBackend {
 public:
  explicit BlockMatchingFlow(int radius) : radius_(radius) {}
  FlowField flow(const FlowQuery& query) override;
  std::string describe() const override;

 private:
  int radius_;
};

class ZeroFlow : public FlowBackend {
 public:
  FlowField flow(const FlowQuery& query) override;
  std::string describe() const override { return "zero-flow"; }
};

// Pixels whose largest channel exceeds `level`. Stands in for a promptable
// segmenter on scenes with a black background.
class ThresholdSegment : public SegmentBackend {
 public:
  explicit ThresholdSegment(double level = 0.02) : level_(level) {}
  BinaryMask segment(const FeatureMap& image) override;
  std::string describe() const override;

 private:
  double level_;
};

}  // namespace amodal::engine
