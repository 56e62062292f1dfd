#include "amodal/fusion/temporal_fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "amodal/error.hpp"
#include "amodal/tensor/sampling.hpp"

namespace amodal::fusion {

SupportSet support_set(int t, int n, int length) {
  if (length < 1 || t < 0 || t >= length) {
    throw Error(ErrorCode::OutOfRange, fmt::format("support_set: t={} outside [0, {})", t, length));
  }
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "support_set: window must be >= 1");
  SupportSet s;
  s.center = t;
  for (int tau = std::max(0, t - n); tau <= std::min(length - 1, t + n); ++tau) {
    if (tau != t) s.members.push_back(tau);
  }
  return s;
}

WarpedLatent warp_feature(const FeatureMap& source, const FlowField& flow, int source_index) {
  if (flow.height() != source.height() || flow.width() != source.width()) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("warp_feature: flow {}x{} vs latent {}x{}", flow.height(), flow.width(),
                            source.height(), source.width()));
  }
  WarpedLatent out{source_index, FeatureMap(source.height(), source.width(), source.channels()),
                   BinaryMask(source.height(), source.width())};
  for (int y = 0; y < source.height(); ++y) {
    for (int x = 0; x < source.width(); ++x) {
      const bool ok = bilinear_sample_into(source, x + flow.u(y, x), y + flow.v(y, x), out.features.pixel(y, x));
      out.validity.set(y, x, ok);
    }
  }
  return out;
}

namespace {

void check_neighbors(const FeatureMap& query, std::span<const WarpedLatent> neighbors) {
  if (neighbors.empty()) throw Error(ErrorCode::InvalidArgument, "fusion: empty neighbour list");
  for (const auto& n : neighbors) {
    if (!n.features.same_shape(query) || n.validity.height() != query.height() ||
        n.validity.width() != query.width()) {
      throw Error(ErrorCode::DimensionMismatch,
                  fmt::format("fusion: neighbour {} shape differs from query {}x{}x{}", n.source,
                              query.height(), query.width(), query.channels()));
    }
  }
}

// Valid neighbour rows at (y, x) in a canonical (lexicographic) order, so the
// reductions below do not depend on the order of the neighbour list.
std::vector<std::span<const double>> valid_rows(std::span<const WarpedLatent> neighbors, int y, int x) {
  std::vector<std::span<const double>> rows;
  rows.reserve(neighbors.size());
  for (const auto& n : neighbors) {
    if (n.validity(y, x)) rows.push_back(n.features.pixel(y, x));
  }
  std::sort(rows.begin(), rows.end(), [](std::span<const double> a, std::span<const double> b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  });
  return rows;
}

template <typename Reduce>
FeatureMap fuse_with(const FeatureMap& query, std::span<const WarpedLatent> neighbors, Reduce reduce) {
  check_neighbors(query, neighbors);
  FeatureMap out = query;
  std::vector<double> weights;
  for (int y = 0; y < query.height(); ++y) {
    for (int x = 0; x < query.width(); ++x) {
      const auto rows = valid_rows(neighbors, y, x);
      if (rows.empty()) continue;
      weights.assign(rows.size(), 0.0);
      reduce(query.pixel(y, x), rows, weights);
      auto dst = out.pixel(y, x);
      std::fill(dst.begin(), dst.end(), 0.0);
      for (std::size_t j = 0; j < rows.size(); ++j) {
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += weights[j] * rows[j][k];
      }
    }
  }
  return out;
}

}  // namespace

FeatureMap fuse_attention(const FeatureMap& query, std::span<const WarpedLatent> neighbors) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(query.channels()));
  return fuse_with(query, neighbors,
                   [scale](std::span<const double> q, const std::vector<std::span<const double>>& rows,
                           std::vector<double>& w) {
                     double max_logit = -std::numeric_limits<double>::infinity();
                     for (std::size_t j = 0; j < rows.size(); ++j) {
                       double dot = 0.0;
                       for (std::size_t k = 0; k < q.size(); ++k) dot += q[k] * rows[j][k];
                       w[j] = dot * scale;
                       max_logit = std::max(max_logit, w[j]);
                     }
                     double total = 0.0;
                     for (double& v : w) {
                       v = std::exp(v - max_logit);
                       total += v;
                     }
                     for (double& v : w) v /= total;
                   });
}

FeatureMap fuse_average(const FeatureMap& query, std::span<const WarpedLatent> neighbors) {
  return fuse_with(query, neighbors,
                   [](std::span<const double>, const std::vector<std::span<const double>>& rows,
                      std::vector<double>& w) {
                     std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(rows.size()));
                   });
}

FeatureMap btf_fuse_latents(std::span<const FeatureMap> latents, int t, const FusionConfig& cfg,
                            const std::function<FlowField(int, int)>& flow_of) {
  const SupportSet support = support_set(t, cfg.window, static_cast<int>(latents.size()));
  const FeatureMap& query = latents[static_cast<std::size_t>(t)];
  if (support.members.empty()) return query;

  std::vector<WarpedLatent> warped;
  warped.reserve(support.members.size());
  for (int tau : support.members) {
    const FeatureMap& z = latents[static_cast<std::size_t>(tau)];
    if (!z.same_shape(query)) {
      throw Error(ErrorCode::DimensionMismatch, fmt::format("btf_fuse: latent {} shape differs from latent {}", tau, t));
    }
    if (!cfg.warp) {
      warped.push_back({tau, z, BinaryMask(z.height(), z.width(), true)});
      continue;
    }
    FlowField flow;
    try {
      flow = flow_of(tau, t);
    } catch (const Error& e) {
      throw Error(e.code(), fmt::format("btf_fuse(t={}, tau={}): flow failed: {}", t, tau, e.what()));
    }
    if (flow.height() != z.height() || flow.width() != z.width()) {
      flow = scale_flow(flow, z.height(), z.width());
    }
    warped.push_back(warp_feature(z, flow, tau));
  }
  return cfg.attention ? fuse_attention(query, warped) : fuse_average(query, warped);
}

FeatureMap btf_fuse(std::span<const FeatureMap> frames, int t, const FusionConfig& cfg,
                    FlowBackend& flow_backend, EncoderBackend& encoder) {
  const SupportSet support = support_set(t, cfg.window, static_cast<int>(frames.size()));
  std::vector<FeatureMap> latents(frames.size());
  auto encode = [&](int index) {
    try {
      latents[static_cast<std::size_t>(index)] = encoder.encode(frames[static_cast<std::size_t>(index)]);
    } catch (const Error& e) {
      throw Error(e.code(), fmt::format("btf_fuse(t={}): encoding frame {} failed: {}", t, index, e.what()));
    }
  };
  encode(t);
  for (int tau : support.members) encode(tau);
  // Frames outside the support set are never read; give them the query's
  // shape so the span stays uniform.
  for (auto& z : latents) {
    if (z.empty()) z = latents[static_cast<std::size_t>(t)];
  }
  return btf_fuse_latents(latents, t, cfg, [&](int source, int target) {
    FlowQuery q{source, target, &frames[static_cast<std::size_t>(source)], &frames[static_cast<std::size_t>(target)]};
    return flow_backend.flow(q);
  });
}

PoolingEncoder::Lift PoolingEncoder::default_lift() {
  constexpr double third = 4.0 / 3.0;
  return {{{4.0, 0.0, 0.0}, {0.0, 4.0, 0.0}, {0.0, 0.0, 4.0}, {third, third, third}}};
}

PoolingEncoder::PoolingEncoder(int downscale) : PoolingEncoder(downscale, default_lift(), {0.0, 0.0, 0.0, 0.0}) {}

PoolingEncoder::PoolingEncoder(int downscale, const Lift& weights, const std::array<double, 4>& offset)
    : downscale_(downscale), weights_(weights), offset_(offset) {
  if (downscale < 1) throw Error(ErrorCode::InvalidArgument, "PoolingEncoder: downscale must be >= 1");
}

FeatureMap PoolingEncoder::encode(const FeatureMap& image) {
  if (image.channels() != 3 && image.channels() != 1) {
    throw Error(ErrorCode::DimensionMismatch, "PoolingEncoder: expects 1 or 3 channel images");
  }
  if (image.height() % downscale_ != 0 || image.width() % downscale_ != 0) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("PoolingEncoder: {}x{} image not divisible by downscale {}", image.height(),
                            image.width(), downscale_));
  }
  const int lh = image.height() / downscale_;
  const int lw = image.width() / downscale_;
  const double inv_area = 1.0 / static_cast<double>(downscale_ * downscale_);
  FeatureMap latent(lh, lw, 4);
  for (int ly = 0; ly < lh; ++ly) {
    for (int lx = 0; lx < lw; ++lx) {
      std::array<double, 3> rgb{};
      for (int dy = 0; dy < downscale_; ++dy) {
        for (int dx = 0; dx < downscale_; ++dx) {
          const auto px = image.pixel(ly * downscale_ + dy, lx * downscale_ + dx);
          for (int c = 0; c < 3; ++c) rgb[static_cast<std::size_t>(c)] += px[image.channels() == 3 ? c : 0];
        }
      }
      auto dst = latent.pixel(ly, lx);
      for (int k = 0; k < 4; ++k) {
        double v = offset_[static_cast<std::size_t>(k)];
        for (int c = 0; c < 3; ++c) {
          v += weights_[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)] * rgb[static_cast<std::size_t>(c)] * inv_area;
        }
        dst[k] = v;
      }
    }
  }
  return latent;
}

std::string PoolingEncoder::describe() const { return fmt::format("pooling-encoder(downscale={})", downscale_); }

}  // namespace amodal::fusion
