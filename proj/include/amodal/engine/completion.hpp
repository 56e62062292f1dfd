#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "amodal/backend.hpp"
#include "amodal/tensor/grid.hpp"

namespace amodal::engine {

// z * M^, where M^ is the union mask bilinearly resampled to latent size.
// Throws DimensionMismatch unless latent dims * downscale == mask dims.
FeatureMap mask_latent(const FeatureMap& z_fused, const BinaryMask& union_mask, int downscale);

// Checks the request, asks the backend for an image and composites it
// inside the occlusion mask; every other pixel is copied from the occludee
// image. An empty mask returns the occludee image without calling the backend.
FeatureMap complete_frame(const CompletionRequest& request, InpaintBackend& backend);

// reference + N(0, sigma^2) per pixel and channel, seeded by (seed, frame).
FeatureMap oracle_inpaint(const CompletionRequest& request, const FeatureMap& reference, double noise_sigma,
                          std::uint64_t seed);

// Test double for the diffusion inpainter. Answers with the reference
// complete frame of the requested index plus seeded noise.
//
// In gated mode the noise is scaled per latent texel by
//   u = min(1, |z_cond - E(ref)| / (|E(ref)| + 1e-6))
// (upsampled bilinearly), so a conditioning latent that matches the
// reference latent yields a clean completion and a wrong one a noisy
// completion. The same noise draws are used whatever the conditioning.
class OracleInpainter : public InpaintBackend {
 public:
  OracleInpainter(std::vector<FeatureMap> references, double noise_sigma);
  OracleInpainter(std::vector<FeatureMap> references, double noise_sigma, std::shared_ptr<EncoderBackend> encoder);

  FeatureMap inpaint(const CompletionRequest& request) override;
  std::string describe() const override;

  bool gated() const { return encoder_ != nullptr; }

 private:
  std::vector<FeatureMap> references_;
  double sigma_;
  std::shared_ptr<EncoderBackend> encoder_;
};

// Noise gate of the gated oracle at latent resolution; exposed for tests.
FeatureMap conditioning_gate(const FeatureMap& conditioning, const FeatureMap& reference_latent);

}  // namespace amodal::engine
