#include "amodal/engine/completion.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "amodal/error.hpp"
#include "amodal/tensor/sampling.hpp"

namespace amodal::engine {

FeatureMap mask_latent(const FeatureMap& z_fused, const BinaryMask& union_mask, int downscale) {
  if (downscale < 1) throw Error(ErrorCode::InvalidArgument, "mask_latent: downscale must be >= 1");
  if (z_fused.height() * downscale != union_mask.height() || z_fused.width() * downscale != union_mask.width()) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("mask_latent: latent {}x{} x{} does not match mask {}x{}", z_fused.height(), z_fused.width(),
                            downscale, union_mask.height(), union_mask.width()));
  }
  const FeatureMap weights = resize_bilinear(to_feature_map(union_mask), z_fused.height(), z_fused.width());
  FeatureMap out = z_fused;
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      const double m = weights.at(y, x, 0);
      for (double& v : out.pixel(y, x)) v *= m;
    }
  }
  return out;
}

namespace {

void check_request(const CompletionRequest& r) {
  if (r.occludee_image.empty()) throw Error(ErrorCode::InvalidArgument, "completion request without an image");
  if (r.occlusion_mask.height() != r.occludee_image.height() || r.occlusion_mask.width() != r.occludee_image.width()) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("frame {}: occlusion mask {}x{} vs image {}x{}", r.frame, r.occlusion_mask.height(),
                            r.occlusion_mask.width(), r.occludee_image.height(), r.occludee_image.width()));
  }
  if (!(r.strength >= 0.0 && r.strength <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("frame {}: strength {} outside [0,1]", r.frame, r.strength));
  }
  if (!std::isfinite(r.guidance)) throw Error(ErrorCode::InvalidArgument, "guidance must be finite");
}

std::mt19937_64 frame_rng(std::uint64_t seed, int frame) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(frame)};
  return std::mt19937_64(seq);
}

const FeatureMap& reference_for(const std::vector<FeatureMap>& refs, const CompletionRequest& r) {
  if (r.frame < 0 || static_cast<std::size_t>(r.frame) >= refs.size()) {
    throw Error(ErrorCode::OutOfRange, fmt::format("oracle: no reference for frame {}", r.frame));
  }
  return refs[static_cast<std::size_t>(r.frame)];
}

}  // namespace

FeatureMap complete_frame(const CompletionRequest& request, InpaintBackend& backend) {
  check_request(request);
  const FeatureMap& base = request.occludee_image;
  if (request.occlusion_mask.none()) return base;

  const FeatureMap generated = backend.inpaint(request);
  if (!generated.same_shape(base)) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("frame {}: backend {} returned {}x{}x{} for a {}x{}x{} image", request.frame,
                            backend.describe(), generated.height(), generated.width(), generated.channels(),
                            base.height(), base.width(), base.channels()));
  }
  FeatureMap out = base;
  for (int y = 0; y < base.height(); ++y) {
    for (int x = 0; x < base.width(); ++x) {
      if (!request.occlusion_mask(y, x)) continue;
      const auto src = generated.pixel(y, x);
      for (double v : src) {
        if (!std::isfinite(v)) {
          throw Error(ErrorCode::NonFinite, fmt::format("frame {}: backend {} produced non-finite pixels", request.frame,
                                                        backend.describe()));
        }
      }
      std::copy(src.begin(), src.end(), out.pixel(y, x).begin());
    }
  }
  return out;
}

FeatureMap oracle_inpaint(const CompletionRequest& request, const FeatureMap& reference, double noise_sigma,
                          std::uint64_t seed) {
  if (reference.height() != request.occludee_image.height() || reference.width() != request.occludee_image.width()) {
    throw Error(ErrorCode::DimensionMismatch, fmt::format("oracle: reference dims differ from frame {}", request.frame));
  }
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "oracle: sigma must be >= 0");
  FeatureMap out = reference;
  if (noise_sigma == 0.0) return out;
  auto rng = frame_rng(seed, request.frame);
  std::normal_distribution<double> normal(0.0, noise_sigma);
  for (double& v : out.data()) v += normal(rng);
  return out;
}

FeatureMap conditioning_gate(const FeatureMap& conditioning, const FeatureMap& reference_latent) {
  if (!conditioning.same_shape(reference_latent)) {
    throw Error(ErrorCode::DimensionMismatch, "conditioning_gate: latent shapes differ");
  }
  FeatureMap gate(conditioning.height(), conditioning.width(), 1);
  for (int y = 0; y < gate.height(); ++y) {
    for (int x = 0; x < gate.width(); ++x) {
      const auto c = conditioning.pixel(y, x);
      const auto r = reference_latent.pixel(y, x);
      double diff = 0.0;
      double norm = 0.0;
      for (std::size_t k = 0; k < c.size(); ++k) {
        diff += (c[k] - r[k]) * (c[k] - r[k]);
        norm += r[k] * r[k];
      }
      gate.at(y, x, 0) = std::min(1.0, std::sqrt(diff) / (std::sqrt(norm) + 1e-6));
    }
  }
  return gate;
}

OracleInpainter::OracleInpainter(std::vector<FeatureMap> references, double noise_sigma)
    : references_(std::move(references)), sigma_(noise_sigma) {
  if (!(sigma_ >= 0.0)) throw Error(ErrorCode::InvalidArgument, "oracle: sigma must be >= 0");
}

OracleInpainter::OracleInpainter(std::vector<FeatureMap> references, double noise_sigma,
                                 std::shared_ptr<EncoderBackend> encoder)
    : OracleInpainter(std::move(references), noise_sigma) {
  encoder_ = std::move(encoder);
}

FeatureMap OracleInpainter::inpaint(const CompletionRequest& request) {
  const FeatureMap& ref = reference_for(references_, request);
  if (!gated()) return oracle_inpaint(request, ref, sigma_, request.seed);
  if (request.conditioning.empty()) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("gated oracle: frame {} has no conditioning", request.frame));
  }
  FeatureMap out = ref;
  if (sigma_ == 0.0) return out;
  const FeatureMap gate = resize_bilinear(conditioning_gate(request.conditioning, encoder_->encode(ref)), ref.height(),
                                          ref.width());
  auto rng = frame_rng(request.seed, request.frame);
  std::normal_distribution<double> normal(0.0, sigma_);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      const double u = gate.at(y, x, 0);
      for (double& v : out.pixel(y, x)) v += u * normal(rng);
    }
  }
  return out;
}

std::string OracleInpainter::describe() const {
  return fmt::format("oracle(sigma={}{})", sigma_, gated() ? ",gated" : "");
}

}  // namespace amodal::engine
