#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "amodal/tensor/grid.hpp"

namespace amodal {

// Everything one inpainting call receives. `conditioning` is the masked fused
// latent at latent resolution; `strength` stands in for the denoise window.
struct CompletionRequest {
  int frame = 0;
  FeatureMap occludee_image;
  BinaryMask occlusion_mask;
  FeatureMap conditioning;
  std::string prompt;
  double strength = 1.0;
  double guidance = 6.0;
  std::uint64_t seed = 0;

  bool operator==(const CompletionRequest&) const = default;
};

// Flow request for the pair (source, target). The answer is the
// target -> source sampling field at image resolution: target pixel p
// corresponds to source location p + flow(p).
struct FlowQuery {
  int source = 0;
  int target = 0;
  const FeatureMap* source_image = nullptr;
  const FeatureMap* target_image = nullptr;
};

class FlowBackend {
 public:
  virtual ~FlowBackend() = default;
  virtual FlowField flow(const FlowQuery& query) = 0;
  virtual std::string describe() const = 0;
};

class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;
  virtual FeatureMap encode(const FeatureMap& image) = 0;
  virtual int downscale() const = 0;
  virtual std::string describe() const = 0;
};

class InpaintBackend {
 public:
  virtual ~InpaintBackend() = default;
  virtual FeatureMap inpaint(const CompletionRequest& request) = 0;
  virtual std::string describe() const = 0;
};

class SegmentBackend {
 public:
  virtual ~SegmentBackend() = default;
  virtual BinaryMask segment(const FeatureMap& image) = 0;
  virtual std::string describe() const = 0;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<double> embed_image(const FeatureMap& image) = 0;
  virtual bool supports_text() const { return false; }
  virtual std::vector<double> embed_text(const std::string& text);
  virtual std::string describe() const = 0;
};

}  // namespace amodal
