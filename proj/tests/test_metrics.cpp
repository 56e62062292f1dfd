#include <doctest.h>

#include <cmath>
#include <fstream>

#include "amodal/error.hpp"
#include "amodal/metrics/metrics.hpp"
#include "amodal/metrics/report.hpp"
#include "amodal/tensor/sampling.hpp"
#include "support.hpp"

using namespace amodal;

namespace {

// Direct 2D-window SSIM, no separable filtering.
double ssim_oracle(const FeatureMap& a, const FeatureMap& b) {
  double g[11][11];
  double total = 0;
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) total += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5);
  }
  const double c1 = 1e-4, c2 = 9e-4;
  double acc = 0;
  int n = 0;
  for (int c = 0; c < a.channels(); ++c) {
    for (int y = 0; y + 11 <= a.height(); ++y) {
      for (int x = 0; x + 11 <= a.width(); ++x) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < 11; ++i) {
          for (int j = 0; j < 11; ++j) {
            const double w = g[i][j] / total;
            mx += w * a.at(y + i, x + j, c);
            my += w * b.at(y + i, x + j, c);
          }
        }
        for (int i = 0; i < 11; ++i) {
          for (int j = 0; j < 11; ++j) {
            const double w = g[i][j] / total;
            const double dx = a.at(y + i, x + j, c) - mx, dy = b.at(y + i, x + j, c) - my;
            sxx += w * dx * dx;
            syy += w * dy * dy;
            sxy += w * dx * dy;
          }
        }
        acc += (2 * mx * my + c1) * (2 * sxy + c2) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
        ++n;
      }
    }
  }
  return acc / n;
}

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidArgument;
}

class ConstantEmbedder : public Embedder {
 public:
  std::vector<double> embed_image(const FeatureMap&) override { return {0.3, 0.4}; }
  bool supports_text() const override { return true; }
  std::vector<double> embed_text(const std::string&) override { return {0.6, 0.8}; }
  std::string describe() const override { return "constant"; }
};

class ImageOnly : public Embedder {
 public:
  std::vector<double> embed_image(const FeatureMap&) override { return {1.0}; }
  std::string describe() const override { return "image-only"; }
};

}  // namespace

TEST_CASE("iou") {
  BinaryMask a(4, 4), b(4, 4);
  a.set(0, 0, true);
  a.set(0, 1, true);
  b.set(0, 1, true);
  b.set(1, 1, true);
  CHECK(iou(a, b) == 1.0 / 3.0);
  CHECK(iou(a, a) == 1.0);
  BinaryMask c(4, 4);
  c.set(3, 3, true);
  CHECK(iou(a, c) == 0.0);
  CHECK(iou(a, b) == iou(b, a));
  CHECK(code_of([] { iou(BinaryMask(2, 2), BinaryMask(2, 2)); }) == ErrorCode::UndefinedIoU);
}

TEST_CASE("tight bbox") {
  BinaryMask one(9, 9);
  one.set(4, 6, true);
  CHECK(tight_bbox(one, 1.0) == BBox{6, 4, 7, 5});

  BinaryMask box(100, 100);
  for (int y = 45; y < 55; ++y) {
    for (int x = 45; x < 55; ++x) box.set(y, x, true);
  }
  const BBox b = tight_bbox(box);
  CHECK(b.width() == 12);
  CHECK(b.height() == 12);
  CHECK(b == BBox{44, 44, 56, 56});

  BinaryMask edge(20, 20);
  for (int y = 0; y < 10; ++y) {
    for (int x = 15; x < 20; ++x) edge.set(y, x, true);
  }
  const BBox e = tight_bbox(edge, 1.2);
  CHECK(e.x1 == 20);
  CHECK(e.y0 == 0);
  CHECK(e.y1 == 11);
  CHECK(code_of([] { tight_bbox(BinaryMask(3, 3)); }) == ErrorCode::EmptyMask);
}

TEST_CASE("psnr masked") {
  std::mt19937_64 rng(30);
  const FeatureMap gt = testing::random_map(rng, 20, 20, 3, 0, 1);
  BinaryMask m(20, 20);
  for (int y = 5; y < 15; ++y) {
    for (int x = 5; x < 15; ++x) m.set(y, x, true);
  }
  CHECK(psnr_masked(gt, gt, m) == 99.0);
  FeatureMap off = gt;
  for (double& v : off.data()) v += 0.1;
  CHECK(std::abs(psnr_masked(off, gt, m) - 20.0) < 1e-9);

  const FeatureMap pred = testing::random_map(rng, 20, 20, 3, 0, 1);
  const BBox b = tight_bbox(m);
  double se = 0;
  int n = 0;
  for (int y = b.y0; y < b.y1; ++y) {
    for (int x = b.x0; x < b.x1; ++x) {
      for (int c = 0; c < 3; ++c) {
        se += (pred.at(y, x, c) - gt.at(y, x, c)) * (pred.at(y, x, c) - gt.at(y, x, c));
        ++n;
      }
    }
  }
  CHECK(std::abs(psnr_masked(pred, gt, m) - 10 * std::log10(n / se)) < 1e-9);

  double last = 1e9;
  for (double e : {0.01, 0.02, 0.05, 0.1, 0.3}) {
    FeatureMap p = gt;
    for (double& v : p.data()) v += e;
    const double s = psnr_masked(p, gt, m);
    CHECK(s < last);
    last = s;
  }
  CHECK(code_of([&] { psnr_masked(pred, gt, BinaryMask(20, 20)); }) == ErrorCode::EmptyMask);
}

TEST_CASE("ssim closed forms, symmetry and oracle") {
  std::mt19937_64 rng(31);
  const FeatureMap a = testing::random_map(rng, 16, 19, 3, 0, 1);
  const FeatureMap b = testing::random_map(rng, 16, 19, 3, 0, 1);
  CHECK(std::abs(ssim(a, a) - 1.0) < 1e-12);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-14));
  CHECK(std::abs(ssim(a, b) - ssim_oracle(a, b)) < 1e-9);

  const double c1 = 1e-4;
  CHECK(std::abs(ssim(FeatureMap(12, 12, 1, 1.0), FeatureMap(12, 12, 1, 0.0)) - c1 / (1 + c1)) < 1e-12);
  const double s = ssim(a, b);
  CHECK(s >= -1.0);
  CHECK(s <= 1.0);
  CHECK(code_of([] { ssim(FeatureMap(10, 20, 1), FeatureMap(10, 20, 1)); }) == ErrorCode::InvalidArgument);

  BinaryMask tiny(30, 30);
  tiny.set(10, 10, true);
  CHECK(code_of([&] { ssim_masked(FeatureMap(30, 30, 3), FeatureMap(30, 30, 3), tiny); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("ssim gradient matches finite differences") {
  std::mt19937_64 rng(32);
  const FeatureMap a = testing::random_map(rng, 13, 14, 2, 0, 1);
  const FeatureMap b = testing::random_map(rng, 13, 14, 2, 0, 1);
  FeatureMap grad;
  ssim_with_gradient(a, b, grad);
  const double h = 1e-5;
  for (std::size_t i = 0; i < a.data().size(); i += 7) {
    FeatureMap p = a, m = a;
    p.data()[i] += h;
    m.data()[i] -= h;
    const double fd = (ssim(p, b) - ssim(m, b)) / (2 * h);
    CHECK(std::abs(fd - grad.data()[i]) <= 1e-6 + 1e-4 * std::abs(fd));
  }
}

TEST_CASE("flow warping error") {
  std::mt19937_64 rng(33);
  const FeatureMap f = testing::random_map(rng, 12, 12, 3, 0, 1);
  std::vector<FeatureMap> still(4, f);
  std::vector<FlowField> zero(3, FlowField(12, 12));
  CHECK(flow_warping_error(still, zero).value == 0.0);

  // Content moves 2 columns right per frame, so frame t at x matches frame t-1 at x - 2.
  const FeatureMap wide = testing::random_map(rng, 12, 40, 3, 0, 1);
  std::vector<FeatureMap> moving;
  for (int t = 0; t < 4; ++t) {
    FeatureMap m(12, 12, 3);
    for (int y = 0; y < 12; ++y) {
      for (int x = 0; x < 12; ++x) {
        for (int c = 0; c < 3; ++c) m.at(y, x, c) = wide.at(y, x + 20 - 2 * t, c);
      }
    }
    moving.push_back(m);
  }
  std::vector<FlowField> back(3, FlowField(12, 12, -2.0, 0.0));
  const auto r = flow_warping_error(moving, back);
  CHECK(r.value == 0.0);
  CHECK(r.per_pair.size() == 3);

  std::vector<FeatureMap> noise;
  for (int t = 0; t < 3; ++t) noise.push_back(testing::random_map(rng, 12, 12, 3, 0, 1));
  CHECK(flow_warping_error(noise, std::vector<FlowField>(2, FlowField(12, 12))).value > 0.0);
  CHECK(code_of([&] { flow_warping_error(noise, std::vector<FlowField>(3, FlowField(12, 12))); }) ==
        ErrorCode::DimensionMismatch);

  // Valid masks restrict the average.
  std::vector<FeatureMap> two{FeatureMap(4, 4, 1, 0.0), FeatureMap(4, 4, 1, 0.0)};
  two[1].at(0, 0, 0) = 1.0;
  BinaryMask keep(4, 4, true);
  keep.set(0, 0, false);
  std::vector<BinaryMask> valid{keep, keep};
  CHECK(flow_warping_error(two, std::vector<FlowField>(1, FlowField(4, 4)), valid).value == 0.0);
  CHECK(flow_warping_error(two, std::vector<FlowField>(1, FlowField(4, 4))).value == 1.0 / 16.0);
}

TEST_CASE("tc score") {
  ToyEmbedder toy;
  std::mt19937_64 rng(34);
  const FeatureMap f = testing::random_map(rng, 40, 40, 3, 0.1, 1);
  std::vector<FeatureMap> same(3, f);
  CHECK(std::abs(tc_score(same, toy) - 100.0) < 1e-9);

  std::vector<FeatureMap> fade;
  for (int t = 0; t < 5; ++t) {
    FeatureMap m(64, 64, 3);
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        for (int c = 0; c < 3; ++c) m.at(y, x, c) = (1 - 0.2 * t) * x / 63.0 + 0.2 * t * y / 63.0 + 0.01;
      }
    }
    fade.push_back(m);
  }
  // Straight-line oracle: grey, 32x32 resample, normalise, cosine.
  auto emb = [](const FeatureMap& m) {
    FeatureMap g(m.height(), m.width(), 1);
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) g.at(y, x, 0) = (m.at(y, x, 0) + m.at(y, x, 1) + m.at(y, x, 2)) / 3;
    }
    return resize_bilinear(g, 32, 32);
  };
  double expected = 0;
  for (int t = 1; t < 5; ++t) {
    const FeatureMap a = emb(fade[static_cast<std::size_t>(t - 1)]), b = emb(fade[static_cast<std::size_t>(t)]);
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
      dot += a.data()[i] * b.data()[i];
      na += a.data()[i] * a.data()[i];
      nb += b.data()[i] * b.data()[i];
    }
    expected += 100 * dot / std::sqrt(na * nb) / 4;
  }
  CHECK(std::abs(tc_score(fade, toy) - expected) < 1e-9);

  CHECK(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 3}) == 0.0);
  CHECK(cosine_similarity(std::vector<double>{1, 2}, std::vector<double>{2, 4}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(tc_score(std::vector<FeatureMap>{f}, toy), Error);
  CHECK_THROWS_AS(tc_score(std::vector<FeatureMap>{f, FeatureMap(40, 40, 3)}, toy), Error);
}

TEST_CASE("clip-style score") {
  ConstantEmbedder c;
  std::vector<FeatureMap> frames(3, FeatureMap(8, 8, 3, 0.5));
  CHECK(std::abs(clip_style_score(frames, "chair", c) - 100.0) < 1e-12);
  CHECK(code_of([&] { clip_style_score(std::vector<FeatureMap>{}, "chair", c); }) == ErrorCode::InvalidArgument);
  ImageOnly io;
  CHECK(code_of([&] { clip_style_score(frames, "chair", io); }) == ErrorCode::MissingCapability);

  testing::TempDir dir("embed");
  std::mt19937_64 rng(35);
  std::vector<FeatureMap> imgs;
  nlohmann::json index;
  double mean = 0;
  const std::vector<double> text{0.0, 1.0, 0.0};
  for (int i = 0; i < 3; ++i) {
    imgs.push_back(testing::random_map(rng, 6, 6, 3, 0, 1));
    const std::vector<double> v{std::cos(i * 0.3), std::sin(i * 0.3), 0.5};
    index["images"].push_back({{"digest", RecordedEmbedder::image_key(imgs.back())}, {"vector", v}});
    mean += 100 * v[1] / std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / 3;
  }
  index["texts"].push_back({{"text", "a box"}, {"vector", text}});
  std::ofstream(dir.path() / "index.json") << index.dump();
  RecordedEmbedder rec(dir.path().string());
  CHECK(std::abs(clip_style_score(imgs, "a box", rec) - mean) < 1e-9);
  CHECK(code_of([&] { rec.embed_text("other"); }) == ErrorCode::Backend);
}

TEST_CASE("report aggregates and round trip") {
  MetricReport r;
  r.config = {{"window", 7}};
  r.notes.push_back("warp error: mean absolute difference");
  r.add(kMetricIoU, {0, 1, 2}, {0.9, 0.95, 1.0});
  r.add(kMetricWarp, {1, 2}, {0.5, 0.25});
  CHECK(r.find(kMetricIoU)->aggregate == doctest::Approx(0.95));
  const MetricReport back = MetricReport::from_json(nlohmann::json::parse(r.to_json().dump()));
  for (const auto& m : back.metrics) {
    double s = 0;
    for (double v : m.values) s += v;
    CHECK(std::abs(m.aggregate - s / m.values.size()) < 1e-12);
  }
  const std::string table = r.to_table();
  CHECK(table.find("IoU") < table.find("Warp-err"));
  CHECK(table.find("mean") != std::string::npos);
  CHECK_THROWS_AS(r.add("x", {}, {}), Error);
}
