#include "amodal/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "amodal/digest.hpp"
#include "amodal/error.hpp"
#include "amodal/tensor/sampling.hpp"
#include "amodal/tensor/txf.hpp"

namespace amodal {

namespace {

void require_shape(const FeatureMap& a, const FeatureMap& b, const char* what) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("{}: {}x{}x{} vs {}x{}x{}", what, a.height(), a.width(), a.channels(), b.height(),
                            b.width(), b.channels()));
  }
}

}  // namespace

double iou(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) throw Error(ErrorCode::DimensionMismatch, "iou: mask dims differ");
  std::size_t inter = 0, uni = 0;
  const auto pa = a.bits();
  const auto pb = b.bits();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    inter += static_cast<std::size_t>(pa[i] & pb[i]);
    uni += static_cast<std::size_t>(pa[i] | pb[i]);
  }
  if (uni == 0) throw Error(ErrorCode::UndefinedIoU, "iou: both masks are empty");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

BBox tight_bbox(const BinaryMask& mask, double margin) {
  if (!(margin >= 1.0)) throw Error(ErrorCode::InvalidArgument, "tight_bbox: margin must be >= 1");
  int x0 = mask.width(), y0 = mask.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(y, x)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) throw Error(ErrorCode::EmptyMask, "tight_bbox: mask is empty");
  auto grow = [margin](int lo, int hi_inclusive, int limit) {
    const double c = 0.5 * (lo + hi_inclusive + 1);
    const double half = 0.5 * (hi_inclusive + 1 - lo) * margin;
    const int a = static_cast<int>(std::floor(c - half + 1e-9));
    const int b = static_cast<int>(std::ceil(c + half - 1e-9));
    return std::pair{std::max(0, a), std::min(limit, b)};
  };
  const auto [bx0, bx1] = grow(x0, x1, mask.width());
  const auto [by0, by1] = grow(y0, y1, mask.height());
  return {bx0, by0, bx1, by1};
}

FeatureMap crop(const FeatureMap& image, const BBox& box) {
  if (box.x0 < 0 || box.y0 < 0 || box.x1 > image.width() || box.y1 > image.height() || box.width() < 1 ||
      box.height() < 1) {
    throw Error(ErrorCode::OutOfRange, "crop: box outside image");
  }
  FeatureMap out(box.height(), box.width(), image.channels());
  for (int y = 0; y < box.height(); ++y) {
    for (int x = 0; x < box.width(); ++x) {
      const auto src = image.pixel(box.y0 + y, box.x0 + x);
      std::copy(src.begin(), src.end(), out.pixel(y, x).begin());
    }
  }
  return out;
}

double psnr(const FeatureMap& pred, const FeatureMap& gt) {
  require_shape(pred, gt, "psnr");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.data().size(); ++i) {
    const double d = pred.data()[i] - gt.data()[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(pred.data().size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double psnr_masked(const FeatureMap& pred, const FeatureMap& gt, const BinaryMask& mask, double margin) {
  require_shape(pred, gt, "psnr_masked");
  const BBox box = tight_bbox(mask, margin);
  return psnr(crop(pred, box), crop(gt, box));
}

namespace {

class SsimFilter {
 public:
  explicit SsimFilter(const SsimParams& p) : size_(p.window), taps_(static_cast<std::size_t>(p.window)) {
    double total = 0.0;
    const double centre = 0.5 * (p.window - 1);
    for (int k = 0; k < p.window; ++k) {
      taps_[static_cast<std::size_t>(k)] = std::exp(-(k - centre) * (k - centre) / (2.0 * p.sigma * p.sigma));
      total += taps_[static_cast<std::size_t>(k)];
    }
    for (double& t : taps_) t /= total;
  }

  int size() const { return size_; }

  // Correlation over fully contained windows: (h-k+1) x (w-k+1).
  std::vector<double> valid(const std::vector<double>& in, int h, int w) const {
    const int oh = h - size_ + 1, ow = w - size_ + 1;
    std::vector<double> rows(static_cast<std::size_t>(h * ow), 0.0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int k = 0; k < size_; ++k) acc += taps_[static_cast<std::size_t>(k)] * in[static_cast<std::size_t>(y * w + x + k)];
        rows[static_cast<std::size_t>(y * ow + x)] = acc;
      }
    }
    std::vector<double> out(static_cast<std::size_t>(oh * ow), 0.0);
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int k = 0; k < size_; ++k) acc += taps_[static_cast<std::size_t>(k)] * rows[static_cast<std::size_t>((y + k) * ow + x)];
        out[static_cast<std::size_t>(y * ow + x)] = acc;
      }
    }
    return out;
  }

  // Adjoint of valid(): scatters an (h-k+1) x (w-k+1) map back to h x w.
  std::vector<double> adjoint(const std::vector<double>& in, int h, int w) const {
    const int oh = h - size_ + 1, ow = w - size_ + 1;
    std::vector<double> rows(static_cast<std::size_t>(h * ow), 0.0);
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const double v = in[static_cast<std::size_t>(y * ow + x)];
        for (int k = 0; k < size_; ++k) rows[static_cast<std::size_t>((y + k) * ow + x)] += taps_[static_cast<std::size_t>(k)] * v;
      }
    }
    std::vector<double> out(static_cast<std::size_t>(h * w), 0.0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < ow; ++x) {
        const double v = rows[static_cast<std::size_t>(y * ow + x)];
        for (int k = 0; k < size_; ++k) out[static_cast<std::size_t>(y * w + x + k)] += taps_[static_cast<std::size_t>(k)] * v;
      }
    }
    return out;
  }

 private:
  int size_;
  std::vector<double> taps_;
};

std::vector<double> channel_plane(const FeatureMap& m, int c) {
  std::vector<double> out(m.pixel_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = m.data()[i * static_cast<std::size_t>(m.channels()) + static_cast<std::size_t>(c)];
  return out;
}

double ssim_impl(const FeatureMap& a, const FeatureMap& b, const SsimParams& p, FeatureMap* grad) {
  require_shape(a, b, "ssim");
  if (a.height() < p.window || a.width() < p.window) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("ssim: {}x{} image is smaller than the {}x{} window", a.height(), a.width(), p.window,
                            p.window));
  }
  const SsimFilter filter(p);
  const int h = a.height(), w = a.width();
  const double c1 = (p.k1 * 1.0) * (p.k1 * 1.0);
  const double c2 = (p.k2 * 1.0) * (p.k2 * 1.0);
  double total = 0.0;
  const std::size_t n_windows = static_cast<std::size_t>((h - p.window + 1) * (w - p.window + 1));
  const double scale = 1.0 / (static_cast<double>(n_windows) * a.channels());
  if (grad) *grad = FeatureMap(h, w, a.channels());

  for (int c = 0; c < a.channels(); ++c) {
    const auto x = channel_plane(a, c);
    const auto y = channel_plane(b, c);
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter.valid(x, h, w);
    const auto my = filter.valid(y, h, w);
    const auto exx = filter.valid(xx, h, w);
    const auto eyy = filter.valid(yy, h, w);
    const auto exy = filter.valid(xy, h, w);
    std::vector<double> d_mu, d_xx, d_xy;
    if (grad) {
      d_mu.resize(n_windows);
      d_xx.resize(n_windows);
      d_xy.resize(n_windows);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < n_windows; ++i) {
      const double sxx = exx[i] - mx[i] * mx[i];
      const double syy = eyy[i] - my[i] * my[i];
      const double sxy = exy[i] - mx[i] * my[i];
      const double a1 = 2.0 * mx[i] * my[i] + c1;
      const double a2 = 2.0 * sxy + c2;
      const double b1 = mx[i] * mx[i] + my[i] * my[i] + c1;
      const double b2 = sxx + syy + c2;
      const double s = a1 * a2 / (b1 * b2);
      sum += s;
      if (grad) {
        d_mu[i] = scale * ((2.0 * my[i] * a2 - 2.0 * my[i] * a1) / (b1 * b2) - s * (2.0 * mx[i] / b1 - 2.0 * mx[i] / b2));
        d_xx[i] = scale * (-s / b2);
        d_xy[i] = scale * (2.0 * a1 / (b1 * b2));
      }
    }
    total += sum / static_cast<double>(n_windows);
    if (grad) {
      const auto g_mu = filter.adjoint(d_mu, h, w);
      const auto g_xx = filter.adjoint(d_xx, h, w);
      const auto g_xy = filter.adjoint(d_xy, h, w);
      for (std::size_t i = 0; i < x.size(); ++i) {
        grad->data()[i * static_cast<std::size_t>(a.channels()) + static_cast<std::size_t>(c)] =
            g_mu[i] + 2.0 * x[i] * g_xx[i] + y[i] * g_xy[i];
      }
    }
  }
  return total / a.channels();
}

}  // namespace

double ssim(const FeatureMap& a, const FeatureMap& b, const SsimParams& params) {
  return ssim_impl(a, b, params, nullptr);
}

double ssim_with_gradient(const FeatureMap& a, const FeatureMap& b, FeatureMap& grad_a, const SsimParams& params) {
  return ssim_impl(a, b, params, &grad_a);
}

double ssim_masked(const FeatureMap& pred, const FeatureMap& gt, const BinaryMask& mask, double margin,
                   const SsimParams& params) {
  require_shape(pred, gt, "ssim_masked");
  const BBox box = tight_bbox(mask, margin);
  return ssim(crop(pred, box), crop(gt, box), params);
}

WarpErrorResult flow_warping_error(std::span<const FeatureMap> frames, std::span<const FlowField> flows,
                                   std::span<const BinaryMask> valid) {
  if (frames.size() < 2) throw Error(ErrorCode::InvalidArgument, "flow_warping_error: needs at least 2 frames");
  if (flows.size() + 1 != frames.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("flow_warping_error: {} frames need {} flows, got {}", frames.size(), frames.size() - 1,
                            flows.size()));
  }
  if (!valid.empty() && valid.size() != frames.size()) {
    throw Error(ErrorCode::DimensionMismatch, "flow_warping_error: one valid mask per frame expected");
  }
  WarpErrorResult r;
  double total = 0.0;
  int used = 0;
  std::vector<double> sample;
  for (std::size_t t = 1; t < frames.size(); ++t) {
    const FeatureMap& prev = frames[t - 1];
    const FeatureMap& cur = frames[t];
    const FlowField& flow = flows[t - 1];
    require_shape(prev, cur, "flow_warping_error");
    if (flow.height() != cur.height() || flow.width() != cur.width()) {
      throw Error(ErrorCode::DimensionMismatch, fmt::format("flow_warping_error: flow {} dims differ", t - 1));
    }
    sample.resize(static_cast<std::size_t>(cur.channels()));
    double sum = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < cur.height(); ++y) {
      for (int x = 0; x < cur.width(); ++x) {
        if (!valid.empty() && !valid[t](y, x)) continue;
        if (!bilinear_sample_into(prev, x + flow.u(y, x), y + flow.v(y, x), sample)) continue;
        const auto px = cur.pixel(y, x);
        for (std::size_t c = 0; c < sample.size(); ++c) sum += std::abs(px[c] - sample[c]);
        count += sample.size();
      }
    }
    const bool ok = count > 0;
    r.pair_used.push_back(ok);
    r.per_pair.push_back(ok ? sum / static_cast<double>(count) : 0.0);
    if (ok) {
      total += r.per_pair.back();
      ++used;
    }
  }
  if (used == 0) throw Error(ErrorCode::EmptyMask, "flow_warping_error: no valid pixels in any pair");
  r.value = total / used;
  return r;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::InvalidArgument, "cosine_similarity: zero-norm embedding");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double tc_score(std::span<const FeatureMap> frames, Embedder& embedder, std::vector<double>* per_pair) {
  if (frames.size() < 2) throw Error(ErrorCode::InvalidArgument, "tc_score: needs at least 2 frames");
  std::vector<double> prev = embedder.embed_image(frames[0]);
  double total = 0.0;
  if (per_pair) per_pair->clear();
  for (std::size_t t = 1; t < frames.size(); ++t) {
    std::vector<double> cur = embedder.embed_image(frames[t]);
    const double s = 100.0 * cosine_similarity(prev, cur);
    if (per_pair) per_pair->push_back(s);
    total += s;
    prev = std::move(cur);
  }
  return total / static_cast<double>(frames.size() - 1);
}

double clip_style_score(std::span<const FeatureMap> frames, const std::string& prompt, Embedder& embedder,
                        std::span<const BinaryMask> masks, std::vector<double>* per_frame) {
  if (frames.empty()) throw Error(ErrorCode::InvalidArgument, "clip_style_score: no frames");
  if (!embedder.supports_text()) {
    throw Error(ErrorCode::MissingCapability, fmt::format("clip_style_score: {} cannot embed text", embedder.describe()));
  }
  if (!masks.empty() && masks.size() != frames.size()) {
    throw Error(ErrorCode::DimensionMismatch, "clip_style_score: one mask per frame expected");
  }
  const std::vector<double> text = embedder.embed_text(prompt);
  double total = 0.0;
  if (per_frame) per_frame->clear();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const FeatureMap img = masks.empty() ? frames[i] : crop(frames[i], tight_bbox(masks[i]));
    const double s = 100.0 * cosine_similarity(embedder.embed_image(img), text);
    if (per_frame) per_frame->push_back(s);
    total += s;
  }
  return total / static_cast<double>(frames.size());
}

std::vector<double> ToyEmbedder::embed_image(const FeatureMap& image) {
  FeatureMap grey(image.height(), image.width(), 1);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      double s = 0.0;
      for (double v : image.pixel(y, x)) s += v;
      grey.at(y, x, 0) = s / image.channels();
    }
  }
  const FeatureMap small = resize_bilinear(grey, kSide, kSide);
  std::vector<double> v(small.data().begin(), small.data().end());
  double norm = 0.0;
  for (double e : v) norm += e * e;
  if (norm == 0.0) throw Error(ErrorCode::InvalidArgument, "toy embedder: zero-norm embedding (black image)");
  norm = std::sqrt(norm);
  for (double& e : v) e /= norm;
  return v;
}

std::vector<double> ToyEmbedder::embed_text(const std::string& text) {
  const std::string digest = sha256_hex(text);
  std::seed_seq seq(digest.begin(), digest.end());
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> d;
  std::vector<double> v(static_cast<std::size_t>(kSide * kSide));
  double norm = 0.0;
  for (double& e : v) {
    e = d(rng);
    norm += e * e;
  }
  norm = std::sqrt(norm);
  for (double& e : v) e /= norm;
  return v;
}

namespace {

std::vector<double> vector_of(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw Error(ErrorCode::Schema, fmt::format("{}: 'vector' must be a non-empty array", where));
  std::vector<double> v;
  for (const auto& e : j) {
    if (!e.is_number()) throw Error(ErrorCode::Schema, fmt::format("{}: 'vector' holds a non-number", where));
    v.push_back(e.get<double>());
  }
  return v;
}

}  // namespace

RecordedEmbedder::RecordedEmbedder(const std::string& fixture_dir) : dir_(fixture_dir) {
  std::ifstream in(fixture_dir + "/index.json");
  if (!in) throw Error(ErrorCode::Io, fmt::format("recorded embedder: cannot open {}/index.json", fixture_dir));
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Schema, fmt::format("recorded embedder: {}", e.what()));
  }
  for (const auto& e : j.value("images", nlohmann::json::array())) {
    if (!e.contains("digest") || !e["digest"].is_string()) throw Error(ErrorCode::Schema, "recorded embedder: image entry without 'digest'");
    images_.emplace_back(e["digest"].get<std::string>(), vector_of(e.value("vector", nlohmann::json()), "image entry"));
  }
  for (const auto& e : j.value("texts", nlohmann::json::array())) {
    if (!e.contains("text") || !e["text"].is_string()) throw Error(ErrorCode::Schema, "recorded embedder: text entry without 'text'");
    texts_.emplace_back(e["text"].get<std::string>(), vector_of(e.value("vector", nlohmann::json()), "text entry"));
  }
}

std::string RecordedEmbedder::image_key(const FeatureMap& image) {
  const auto bytes = encode_txf(to_tensor(image, TxfDtype::F64));
  return sha256_hex(bytes);
}

std::vector<double> RecordedEmbedder::embed_image(const FeatureMap& image) {
  const std::string key = image_key(image);
  for (const auto& [k, v] : images_) {
    if (k == key) return v;
  }
  throw Error(ErrorCode::Backend, fmt::format("recorded embedder: no vector for image {}", key.substr(0, 16)));
}

std::vector<double> RecordedEmbedder::embed_text(const std::string& text) {
  for (const auto& [k, v] : texts_) {
    if (k == text) return v;
  }
  throw Error(ErrorCode::Backend, fmt::format("recorded embedder: no vector for text '{}'", text));
}

std::string RecordedEmbedder::describe() const { return fmt::format("recorded-embedder({})", dir_); }

}  // namespace amodal
