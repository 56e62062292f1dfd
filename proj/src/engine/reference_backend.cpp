#include <array>
#include <chrono>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "amodal/engine/protocol.hpp"
#include "amodal/error.hpp"
#include "amodal/fusion/temporal_fusion.hpp"
#include "amodal/metrics/metrics.hpp"

namespace amodal::protocol {

namespace fs = std::filesystem;

namespace {

std::string env(const char* name) {
  const char* v = std::getenv(name);
  return v ? v : "";
}

std::vector<std::string> advertised() {
  const std::string restrict = env("AMODAL_STUB_OPS");
  if (restrict.empty()) return known_ops();
  std::vector<std::string> ops{"capabilities"};
  std::stringstream ss(restrict);
  for (std::string op; std::getline(ss, op, ',');) {
    if (!op.empty() && op != "capabilities") ops.push_back(op);
  }
  return ops;
}

fs::path input(const fs::path& dir, const Request& r, const char* name) {
  const auto it = r.inputs.find(name);
  if (it == r.inputs.end()) throw Error(ErrorCode::Protocol, fmt::format("{} request lacks input '{}'", r.op, name));
  return dir / it->second;
}

FeatureMap mean_fill(const FeatureMap& image, const BinaryMask& mask) {
  const int c = image.channels();
  std::vector<double> sum(static_cast<std::size_t>(c), 0.0);
  std::size_t count = 0;
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const auto px = image.pixel(y, x);
      bool lit = false;
      for (double v : px) lit = lit || v != 0.0;
      if (mask(y, x) || !lit) continue;
      for (int k = 0; k < c; ++k) sum[static_cast<std::size_t>(k)] += px[k];
      ++count;
    }
  }
  FeatureMap out = image;
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      if (!mask(y, x)) continue;
      auto px = out.pixel(y, x);
      for (int k = 0; k < c; ++k) px[k] = count ? sum[static_cast<std::size_t>(k)] / static_cast<double>(count) : 0.0;
    }
  }
  return out;
}

Tensor vector_tensor(const std::vector<double>& v) {
  Tensor t;
  t.dtype = TxfDtype::F64;
  t.dims = {v.size()};
  t.values = v;
  return t;
}

Response answer(const fs::path& dir, const Request& r) {
  Response resp;
  resp.id = r.id;
  if (r.op != "capabilities" && env("AMODAL_STUB_FAIL") == r.op) {
    throw Error(ErrorCode::Backend, fmt::format("{} failure requested", r.op));
  }
  if (r.op == "capabilities") {
    resp.capabilities = advertised();
    resp.concurrent_safe = true;
  } else if (r.op == "flow") {
    const FeatureMap target = read_feature_map(input(dir, r, "target"));
    write_txf(FlowField(target.height(), target.width()), dir / "flow.txf");
    resp.outputs["flow"] = "flow.txf";
  } else if (r.op == "encode") {
    const int downscale = r.params.value("downscale", 8);
    fusion::PoolingEncoder enc(downscale);
    write_txf(enc.encode(read_feature_map(input(dir, r, "image"))), dir / "latent.txf");
    resp.outputs["latent"] = "latent.txf";
  } else if (r.op == "inpaint") {
    const FeatureMap image = read_feature_map(input(dir, r, "image"));
    const BinaryMask mask = read_binary_mask(input(dir, r, "mask"));
    write_txf(mean_fill(image, mask), dir / "output.txf");
    resp.outputs["image"] = "output.txf";
  } else if (r.op == "segment") {
    const FeatureMap image = read_feature_map(input(dir, r, "image"));
    BinaryMask m(image.height(), image.width());
    for (int y = 0; y < image.height(); ++y) {
      for (int x = 0; x < image.width(); ++x) {
        double hi = 0.0;
        for (double v : image.pixel(y, x)) hi = std::max(hi, v);
        m.set(y, x, hi > 0.02);
      }
    }
    write_txf(m, dir / "seg.txf");
    resp.outputs["mask"] = "seg.txf";
  } else if (r.op == "embed") {
    ToyEmbedder toy;
    const std::string kind = r.params.value("kind", "image");
    const auto v = kind == "text" ? toy.embed_text(r.prompt) : toy.embed_image(read_feature_map(input(dir, r, "image")));
    write_tensor(vector_tensor(v), dir / "embedding.txf");
    resp.outputs["embedding"] = "embedding.txf";
  } else {
    throw Error(ErrorCode::Protocol, fmt::format("unsupported op '{}'", r.op));
  }
  return resp;
}

}  // namespace

int serve_reference(const fs::path& dir) {
  if (const std::string delay = env("AMODAL_STUB_DELAY_MS"); !delay.empty()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(std::atoll(delay.c_str())));
  }
  Request r;
  try {
    r = read_request(dir);
  } catch (const std::exception& e) {
    Response resp;
    resp.status = "error";
    resp.error = e.what();
    resp.id = "unknown";
    write_response(dir, resp);
    return 2;
  }
  try {
    write_response(dir, answer(dir, r));
    return 0;
  } catch (const std::exception& e) {
    Response resp;
    resp.id = r.id;
    resp.status = "error";
    resp.error = e.what();
    write_response(dir, resp);
    return 1;
  }
}

}  // namespace amodal::protocol
