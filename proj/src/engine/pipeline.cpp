#include "amodal/engine/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "amodal/digest.hpp"
#include "amodal/engine/completion.hpp"
#include "amodal/error.hpp"
#include "amodal/fusion/temporal_fusion.hpp"
#include "amodal/tensor/image_io.hpp"
#include "amodal/tensor/txf.hpp"

namespace amodal::engine {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(FrameStatus s) {
  switch (s) {
    case FrameStatus::Completed: return "completed";
    case FrameStatus::Passthrough: return "passthrough";
    case FrameStatus::Failed: return "failed";
  }
  return "?";
}

bool in_ratio_band(double ratio, const RunConfig& cfg) { return ratio >= cfg.ratio_lo && ratio <= cfg.ratio_hi; }

std::string tensor_digest(const FeatureMap& map) {
  const auto bytes = encode_txf(to_tensor(map));
  return sha256_hex(bytes);
}

CompletionRequest make_request(const Dataset& d, const RunConfig& cfg, int t, const MaskBundle& masks,
                               const FeatureMap& z_fused) {
  CompletionRequest r;
  r.frame = t;
  r.occludee_image = apply_mask(d.frames[static_cast<std::size_t>(t)], masks.union_);
  r.occlusion_mask = masks.occlusion;
  r.conditioning = mask_latent(z_fused, masks.union_, cfg.downscale);
  r.prompt = d.prompt;
  r.strength = cfg.strength;
  r.guidance = cfg.guidance;
  r.seed = cfg.seed;
  return r;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

template <typename Job>
void run_pool(int workers, int jobs, Job job) {
  std::atomic<int> next{0};
  auto loop = [&] {
    for (int i = next++; i < jobs; i = next++) job(i);
  };
  const int extra = std::min(workers, jobs) - 1;
  std::vector<std::jthread> threads;
  for (int k = 0; k < extra; ++k) threads.emplace_back(loop);
  loop();
}

// Guards every write to the per-frame records.
class Ledger {
 public:
  explicit Ledger(int n) : records_(static_cast<std::size_t>(n)) {
    for (int t = 0; t < n; ++t) records_[static_cast<std::size_t>(t)].index = t;
  }

  template <typename F>
  void update(int t, F f) {
    std::lock_guard lock(mutex_);
    f(records_[static_cast<std::size_t>(t)]);
  }

  void fail(int t, const std::string& what) {
    update(t, [&](FrameRecord& r) {
      r.status = FrameStatus::Failed;
      if (r.error.empty()) r.error = what;
    });
  }

  FrameStatus status(int t) {
    std::lock_guard lock(mutex_);
    return records_[static_cast<std::size_t>(t)].status;
  }

  std::vector<FrameRecord> take() { return std::move(records_); }

 private:
  std::mutex mutex_;
  std::vector<FrameRecord> records_;
};

class FlowCache {
 public:
  explicit FlowCache(FlowBackend* backend, std::span<const FeatureMap> frames) : backend_(backend), frames_(frames) {}

  FlowField get(int source, int target) {
    const auto key = std::make_pair(source, target);
    {
      std::lock_guard lock(mutex_);
      if (const auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    if (!backend_) throw Error(ErrorCode::MissingCapability, "no flow backend configured");
    FlowQuery q{source, target, &frames_[static_cast<std::size_t>(source)], &frames_[static_cast<std::size_t>(target)]};
    FlowField f = backend_->flow(q);
    std::lock_guard lock(mutex_);
    return cache_.emplace(key, std::move(f)).first->second;
  }

 private:
  FlowBackend* backend_;
  std::span<const FeatureMap> frames_;
  std::mutex mutex_;
  std::map<std::pair<int, int>, FlowField> cache_;
};

json record_json(const FrameRecord& r) {
  json j;
  j["index"] = r.index;
  j["status"] = to_string(r.status);
  j["occlusion_ratio"] = r.occlusion_ratio ? json(*r.occlusion_ratio) : json(nullptr);
  j["timings_ms"] = {{"masks", r.mask_ms}, {"fuse", r.fuse_ms}, {"inpaint", r.inpaint_ms}};
  j["output_digest"] = r.output_digest;
  if (!r.conditioning_checksum.empty()) j["conditioning_checksum"] = r.conditioning_checksum;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

}  // namespace

SequenceResult complete_sequence(const Dataset& d, const RunConfig& cfg, BackendSet& backends,
                                 const std::optional<fs::path>& out_dir) {
  cfg.validate();
  if (!backends.encoder || !backends.inpaint || (cfg.warp && !backends.flow)) {
    throw Error(ErrorCode::MissingCapability, "complete_sequence needs encoder, inpaint and (with warping) flow backends");
  }
  if (backends.encoder->downscale() != cfg.downscale) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("encoder downscale {} differs from config downscale {}",
                                                        backends.encoder->downscale(), cfg.downscale));
  }
  const int n = d.size();
  const auto run_start = Clock::now();
  Ledger ledger(n);
  SequenceResult result;
  result.outputs.resize(static_cast<std::size_t>(n));
  result.masks.resize(static_cast<std::size_t>(n));
  std::vector<FeatureMap> latents(static_cast<std::size_t>(n));
  std::vector<char> latent_ok(static_cast<std::size_t>(n), 0);

  MaskOptions mopt;
  mopt.subsample_max = cfg.subsample_max;
  mopt.seed = cfg.seed;
  mopt.alpha = cfg.alpha;
  mopt.dilation_px = cfg.dilation_px;

  // Masks, ratio filter and latents.
  run_pool(cfg.workers, n, [&](int t) {
    const auto i = static_cast<std::size_t>(t);
    const auto start = Clock::now();
    try {
      result.masks[i] = build_mask_bundle(d.visible[i], d.occluder[i], d.clouds[i], d.camera, mopt);
      const double ratio = occlusion_ratio(result.masks[i].visible, result.masks[i].union_);
      ledger.update(t, [&](FrameRecord& r) {
        r.occlusion_ratio = ratio;
        if (!in_ratio_band(ratio, cfg)) r.status = FrameStatus::Passthrough;
      });
    } catch (const Error& e) {
      ledger.fail(t, fmt::format("masks: {}", e.what()));
    }
    ledger.update(t, [&](FrameRecord& r) { r.mask_ms = ms_since(start); });
    try {
      latents[i] = backends.encoder->encode(apply_mask(d.frames[i], d.visible[i]));
      latent_ok[i] = 1;
    } catch (const Error& e) {
      ledger.fail(t, fmt::format("encode: {}", e.what()));
    }
  });

  FlowCache flows(backends.flow.get(), d.frames);
  fusion::FusionConfig fcfg{cfg.window, cfg.downscale, cfg.warp, cfg.attention};

  run_pool(cfg.workers, n, [&](int t) {
    const auto i = static_cast<std::size_t>(t);
    const FrameStatus status = ledger.status(t);
    if (status != FrameStatus::Completed) {
      result.outputs[i] = d.frames[i];
      return;
    }
    try {
      const auto fuse_start = Clock::now();
      for (int tau : fusion::support_set(t, cfg.window, n).members) {
        if (!latent_ok[static_cast<std::size_t>(tau)]) {
          throw Error(ErrorCode::Backend, fmt::format("latent of neighbour frame {} is unavailable", tau));
        }
      }
      const FeatureMap fused = fusion::btf_fuse_latents(latents, t, fcfg, [&](int s, int tg) { return flows.get(s, tg); });
      const CompletionRequest req = make_request(d, cfg, t, result.masks[i], fused);
      const double fuse_ms = ms_since(fuse_start);
      const auto inpaint_start = Clock::now();
      result.outputs[i] = complete_frame(req, *backends.inpaint);
      const double inpaint_ms = ms_since(inpaint_start);
      const std::string checksum = tensor_digest(req.conditioning);
      ledger.update(t, [&](FrameRecord& r) {
        r.fuse_ms = fuse_ms;
        r.inpaint_ms = inpaint_ms;
        r.conditioning_checksum = checksum;
      });
    } catch (const Error& e) {
      ledger.fail(t, e.what());
      result.outputs[i] = d.frames[i];
    }
  });

  result.frames = ledger.take();
  int completed = 0, passthrough = 0, failed = 0;
  for (auto& r : result.frames) {
    r.output_digest = tensor_digest(result.outputs[static_cast<std::size_t>(r.index)]);
    completed += r.status == FrameStatus::Completed;
    passthrough += r.status == FrameStatus::Passthrough;
    failed += r.status == FrameStatus::Failed;
  }
  const bool over_budget = failed > cfg.failure_budget * n;

  json& m = result.manifest;
  m["dataset"] = fs::absolute(d.root).string();
  m["frames_total"] = n;
  m["config"] = to_json(cfg);
  m["backends"] = backends.to_json();
  m["frames"] = json::array();
  for (const auto& r : result.frames) m["frames"].push_back(record_json(r));
  m["summary"] = {{"completed", completed},
                  {"passthrough", passthrough},
                  {"failed", failed},
                  {"status", over_budget ? "failed" : "ok"},
                  {"wall_ms", ms_since(run_start)}};

  if (out_dir) {
    fs::create_directories(*out_dir / "outputs");
    for (int t = 0; t < n; ++t) {
      const auto& img = result.outputs[static_cast<std::size_t>(t)];
      write_png(img, *out_dir / "outputs" / fmt::format("{:06d}.png", t));
      write_txf(img, *out_dir / "outputs" / fmt::format("{:06d}.txf", t));
    }
    std::ofstream(*out_dir / "manifest.json") << m.dump(2) << "\n";
  }
  if (over_budget) {
    std::string first;
    for (const auto& r : result.frames) {
      if (r.status == FrameStatus::Failed) {
        first = fmt::format("frame {}: {}", r.index, r.error);
        break;
      }
    }
    throw Error(ErrorCode::Backend, fmt::format("{} of {} frames failed (budget {:.0f}%); first: {}", failed, n,
                                                cfg.failure_budget * 100.0, first));
  }
  return result;
}

}  // namespace amodal::engine
