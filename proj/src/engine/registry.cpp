#include "amodal/engine/registry.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "amodal/digest.hpp"
#include "amodal/engine/completion.hpp"
#include "amodal/engine/protocol.hpp"
#include "amodal/error.hpp"
#include "amodal/fusion/temporal_fusion.hpp"
#include "amodal/metrics/metrics.hpp"
#include "amodal/synth/scene.hpp"

namespace amodal::engine {

namespace fs = std::filesystem;

nlohmann::json BackendSet::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [role, i] : info) {
    j[role] = {{"locator", i.locator}, {"describe", i.description}, {"digest", i.digest}};
  }
  return j;
}

Locator parse_locator(const std::string& text) {
  Locator l;
  for (const char* scheme : {"exec:", "http://", "fixture:", "record:"}) {
    if (text.rfind(scheme, 0) == 0) {
      l.name = text;
      l.external = true;
      return l;
    }
  }
  const auto colon = text.find(':');
  l.name = text.substr(0, colon);
  if (colon == std::string::npos) return l;
  const std::string rest = text.substr(colon + 1);
  if (l.name == "recorded") {
    l.options["dir"] = rest;
    return l;
  }
  std::size_t pos = 0;
  while (pos <= rest.size()) {
    const auto comma = std::min(rest.find(',', pos), rest.size());
    const std::string item = rest.substr(pos, comma - pos);
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("locator '{}': option '{}' is not key=value", text, item));
    }
    l.options[item.substr(0, eq)] = item.substr(eq + 1);
    pos = comma + 1;
  }
  return l;
}

GroundTruthFlow::GroundTruthFlow(nlohmann::json scene) : scene_(std::move(scene)) { synth::scene_from_json(scene_); }

FlowField GroundTruthFlow::flow(const FlowQuery& q) {
  return synth::gt_flow(synth::scene_from_json(scene_), q.source, q.target);
}

FlowField BlockMatchingFlow::flow(const FlowQuery& q) {
  if (!q.source_image || !q.target_image) throw Error(ErrorCode::InvalidArgument, "block flow needs both images");
  return synth::block_matching_flow(*q.target_image, *q.source_image, radius_).flow;
}

std::string BlockMatchingFlow::describe() const { return fmt::format("block-matching(radius={})", radius_); }

FlowField ZeroFlow::flow(const FlowQuery& q) {
  if (!q.target_image) throw Error(ErrorCode::InvalidArgument, "zero flow needs the target image");
  return FlowField(q.target_image->height(), q.target_image->width());
}

BinaryMask ThresholdSegment::segment(const FeatureMap& image) {
  BinaryMask m(image.height(), image.width());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const auto p = image.pixel(y, x);
      m.set(y, x, *std::max_element(p.begin(), p.end()) > level_);
    }
  }
  return m;
}

std::string ThresholdSegment::describe() const { return fmt::format("threshold-segment(level={})", level_); }

namespace {

double number_option(const Locator& l, const char* key, double fallback) {
  const auto it = l.options.find(key);
  if (it == l.options.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("locator '{}': option {} is not a number", l.name, key));
  }
}

void only_options(const Locator& l, std::initializer_list<const char*> keys) {
  for (const auto& [k, v] : l.options) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* key) { return k == key; })) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("locator '{}': unknown option '{}'", l.name, k));
    }
  }
}

const GroundTruth& need_gt(const Dataset* d, const std::string& what) {
  if (!d || !d->gt) throw Error(ErrorCode::MissingCapability, fmt::format("{} needs a dataset with a gt/ subtree", what));
  return *d->gt;
}

}  // namespace

BackendSet make_backends(const RunConfig& cfg, const Dataset* dataset, const std::vector<std::string>& roles,
                         const fs::path& workdir) {
  BackendSet set;
  std::map<std::string, std::shared_ptr<protocol::Client>> clients;
  auto client_for = [&](const std::string& locator, const std::string& role) {
    auto& c = clients[locator];
    if (!c) {
      const fs::path dir = workdir.empty() ? fs::path{} : workdir / role;
      c = std::make_shared<protocol::Client>(protocol::make_transport(locator, protocol::default_timeout()), dir,
                                             cfg.keep_requests);
    }
    return c;
  };
  std::shared_ptr<EncoderBackend> toy_encoder;
  auto encoder_for_oracle = [&]() -> std::shared_ptr<EncoderBackend> {
    if (set.encoder) return set.encoder;
    if (!toy_encoder) toy_encoder = std::make_shared<fusion::PoolingEncoder>(cfg.downscale);
    return toy_encoder;
  };

  // Encoder first so a gated oracle can share it.
  std::vector<std::string> ordered = roles;
  std::stable_partition(ordered.begin(), ordered.end(), [](const std::string& r) { return r == "encoder"; });

  for (const auto& role : ordered) {
    const auto it = cfg.backends.find(role);
    if (it == cfg.backends.end()) throw Error(ErrorCode::MissingCapability, fmt::format("no backend configured for '{}'", role));
    const std::string& text = it->second;
    const Locator l = parse_locator(text);
    std::string description;
    std::string digest;

    if (l.external) {
      auto client = client_for(text, role);
      if (role == "flow") set.flow = std::make_shared<protocol::ExternalFlow>(client);
      else if (role == "encoder") set.encoder = std::make_shared<protocol::ExternalEncoder>(client, cfg.downscale);
      else if (role == "inpaint") set.inpaint = std::make_shared<protocol::ExternalInpaint>(client);
      else if (role == "segment") set.segment = std::make_shared<protocol::ExternalSegment>(client);
      else if (role == "embed") set.embed = std::make_shared<protocol::ExternalEmbedder>(client);
      else throw Error(ErrorCode::InvalidArgument, fmt::format("unknown backend role '{}'", role));
      digest = client->digest();
    } else if (role == "flow") {
      if (l.name == "gt") {
        only_options(l, {});
        const auto& gt = need_gt(dataset, "flow backend 'gt'");
        if (!gt.scene) throw Error(ErrorCode::MissingCapability, "flow backend 'gt' needs gt/scene.json");
        set.flow = std::make_shared<GroundTruthFlow>(*gt.scene);
        digest = sha256_hex(gt.scene->dump());
      } else if (l.name == "block") {
        only_options(l, {"radius"});
        const int radius = static_cast<int>(number_option(l, "radius", 4));
        if (radius < 1) throw Error(ErrorCode::InvalidArgument, "block flow radius must be >= 1");
        set.flow = std::make_shared<BlockMatchingFlow>(radius);
      } else if (l.name == "zero") {
        only_options(l, {});
        set.flow = std::make_shared<ZeroFlow>();
      }
    } else if (role == "encoder") {
      if (l.name == "toy") {
        only_options(l, {});
        set.encoder = std::make_shared<fusion::PoolingEncoder>(cfg.downscale);
      }
    } else if (role == "inpaint") {
      if (l.name == "oracle") {
        only_options(l, {"sigma", "gated"});
        const auto& gt = need_gt(dataset, "inpaint backend 'oracle'");
        const double sigma = number_option(l, "sigma", 0.0);
        if (number_option(l, "gated", 0) != 0) {
          set.inpaint = std::make_shared<OracleInpainter>(gt.complete, sigma, encoder_for_oracle());
        } else {
          set.inpaint = std::make_shared<OracleInpainter>(gt.complete, sigma);
        }
      }
    } else if (role == "segment") {
      if (l.name == "threshold") {
        only_options(l, {"level"});
        set.segment = std::make_shared<ThresholdSegment>(number_option(l, "level", 0.02));
      }
    } else if (role == "embed") {
      if (l.name == "toy") {
        only_options(l, {});
        set.embed = std::make_shared<ToyEmbedder>();
      } else if (l.name == "recorded") {
        const auto d = l.options.find("dir");
        if (d == l.options.end()) throw Error(ErrorCode::InvalidArgument, "recorded embedder needs recorded:DIR");
        set.embed = std::make_shared<RecordedEmbedder>(d->second);
        digest = file_digest(fs::path(d->second) / "index.json");
      }
    } else {
      throw Error(ErrorCode::InvalidArgument, fmt::format("unknown backend role '{}'", role));
    }

    if (role == "flow" && set.flow) description = set.flow->describe();
    else if (role == "encoder" && set.encoder) description = set.encoder->describe();
    else if (role == "inpaint" && set.inpaint) description = set.inpaint->describe();
    else if (role == "segment" && set.segment) description = set.segment->describe();
    else if (role == "embed" && set.embed) description = set.embed->describe();
    if (description.empty()) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("unknown {} backend '{}'", role, text));
    }
    if (digest.empty()) digest = sha256_hex(description);
    set.info[role] = {text, description, digest};
  }
  return set;
}

}  // namespace amodal::engine
