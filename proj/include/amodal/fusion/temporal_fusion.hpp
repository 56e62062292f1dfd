#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "amodal/backend.hpp"
#include "amodal/tensor/grid.hpp"

namespace amodal::fusion {

// Neighbouring frame indices around `center`; never contains the centre.
struct SupportSet {
  int center = 0;
  std::vector<int> members;
};

// {t-n .. t-1, t+1 .. t+n} clipped to [0, length-1]. Near the ends the set
// shrinks; nothing is mirrored or duplicated.
SupportSet support_set(int t, int n, int length);

struct WarpedLatent {
  int source = -1;
  FeatureMap features;
  BinaryMask validity;
};

// Backward warp: out(p) = z_src(p + flow(p)), invalid where the sample
// falls outside the source grid.
WarpedLatent warp_feature(const FeatureMap& source, const FlowField& flow_target_to_source,
                          int source_index = -1);

// Per-location scaled dot-product attention of `query` over the valid
// neighbour vectors (identity projections, temperature sqrt(C)). Locations
// with no valid neighbour return the query.
FeatureMap fuse_attention(const FeatureMap& query, std::span<const WarpedLatent> neighbors);

// Ablation stand-in for attention: uniform mean of the valid neighbours.
FeatureMap fuse_average(const FeatureMap& query, std::span<const WarpedLatent> neighbors);

struct FusionConfig {
  int window = 7;
  int downscale = 8;
  bool warp = true;       // off: neighbours enter unwarped
  bool attention = true;  // off: uniform averaging

  bool operator==(const FusionConfig&) const = default;
};

// Fused latent for frame t from precomputed latents. `flow_of(source, target)`
// returns the target -> source field at image resolution; it is only called
// when cfg.warp is set.
FeatureMap btf_fuse_latents(std::span<const FeatureMap> latents, int t, const FusionConfig& cfg,
                            const std::function<FlowField(int source, int target)>& flow_of);

// Full composition: encodes frame t and its support set, estimates flows,
// warps and fuses.
FeatureMap btf_fuse(std::span<const FeatureMap> frames, int t, const FusionConfig& cfg,
                    FlowBackend& flow_backend, EncoderBackend& encoder);

// Block-average pooling by `downscale` followed by a fixed linear lift from
// RGB to four latent channels. Stands in for a pretrained VAE encoder.
class PoolingEncoder : public EncoderBackend {
 public:
  using Lift = std::array<std::array<double, 3>, 4>;

  explicit PoolingEncoder(int downscale = 8);
  PoolingEncoder(int downscale, const Lift& weights, const std::array<double, 4>& offset);

  FeatureMap encode(const FeatureMap& image) override;
  int downscale() const override { return downscale_; }
  std::string describe() const override;

  static Lift default_lift();

 private:
  int downscale_;
  Lift weights_;
  std::array<double, 4> offset_;
};

}  // namespace amodal::fusion
