#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amodal/backend.hpp"
#include "amodal/tensor/grid.hpp"

namespace amodal {

// Half-open pixel box.
struct BBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool operator==(const BBox&) const = default;
};

inline constexpr double kCropMargin = 1.2;
inline constexpr double kPsnrCap = 99.0;

// Throws UndefinedIoU when both masks are empty.
double iou(const BinaryMask& a, const BinaryMask& b);

// Minimal box around the set pixels, each side scaled by `margin` about the
// centre, rounded outward and clipped to the image.
BBox tight_bbox(const BinaryMask& mask, double margin = kCropMargin);

FeatureMap crop(const FeatureMap& image, const BBox& box);

// 10 log10(1 / MSE), capped at kPsnrCap.
double psnr(const FeatureMap& pred, const FeatureMap& gt);
double psnr_masked(const FeatureMap& pred, const FeatureMap& gt, const BinaryMask& mask, double margin = kCropMargin);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

// Mean SSIM over all fully contained windows, averaged over channels.
// Throws InvalidArgument when the image is smaller than the window.
double ssim(const FeatureMap& a, const FeatureMap& b, const SsimParams& params = {});
double ssim_masked(const FeatureMap& pred, const FeatureMap& gt, const BinaryMask& mask, double margin = kCropMargin,
                   const SsimParams& params = {});

// SSIM and its gradient with respect to every entry of `a`.
double ssim_with_gradient(const FeatureMap& a, const FeatureMap& b, FeatureMap& grad_a, const SsimParams& params = {});

// Mean absolute difference between frame t and frame t-1 warped onto t by
// flows[t-1] (the t -> t-1 field), over pixels whose sample stayed in bounds
// and, when `valid` is given, that are set in valid[t]. Averaged over pairs;
// returned unscaled. Pairs without any valid pixel are skipped.
struct WarpErrorResult {
  double value = 0.0;
  std::vector<double> per_pair;  // index t-1
  std::vector<bool> pair_used;
};
WarpErrorResult flow_warping_error(std::span<const FeatureMap> frames, std::span<const FlowField> flows,
                                   std::span<const BinaryMask> valid = {});

double cosine_similarity(std::span<const double> a, std::span<const double> b);

// 100 x mean cosine similarity of consecutive frame embeddings.
double tc_score(std::span<const FeatureMap> frames, Embedder& embedder, std::vector<double>* per_pair = nullptr);

// 100 x mean cosine similarity between each frame and the prompt. Frames are
// cropped to tight_bbox(masks[i]) when masks are given.
double clip_style_score(std::span<const FeatureMap> frames, const std::string& prompt, Embedder& embedder,
                        std::span<const BinaryMask> masks = {}, std::vector<double>* per_frame = nullptr);

// 32x32 grey downsample, L2-normalised. Text maps to a unit vector seeded by
// the SHA-256 of the text, so it is only useful as plumbing.
class ToyEmbedder : public Embedder {
 public:
  static constexpr int kSide = 32;

  std::vector<double> embed_image(const FeatureMap& image) override;
  bool supports_text() const override { return true; }
  std::vector<double> embed_text(const std::string& text) override;
  std::string describe() const override { return "toy-embedder(32x32 grey)"; }
};

// Replays vectors recorded on disk. `index.json` holds
//   {"images": [{"digest": <sha256 of the f64 TXF encoding>, "vector": [...]}],
//    "texts":  [{"text": <string>, "vector": [...]}]}
class RecordedEmbedder : public Embedder {
 public:
  explicit RecordedEmbedder(const std::string& fixture_dir);

  std::vector<double> embed_image(const FeatureMap& image) override;
  bool supports_text() const override { return true; }
  std::vector<double> embed_text(const std::string& text) override;
  std::string describe() const override;

  static std::string image_key(const FeatureMap& image);

 private:
  std::string dir_;
  std::vector<std::pair<std::string, std::vector<double>>> images_;
  std::vector<std::pair<std::string, std::vector<double>>> texts_;
};

}  // namespace amodal
