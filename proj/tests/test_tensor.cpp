#include <doctest.h>

#include <cmath>
#include <fstream>

#include "amodal/error.hpp"
#include "amodal/tensor/image_io.hpp"
#include "amodal/tensor/sampling.hpp"
#include "amodal/tensor/txf.hpp"
#include "support.hpp"

using namespace amodal;

namespace {

// Straight 4-term bilinear formula.
double bilinear_oracle(const FeatureMap& m, double x, double y, int c) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, m.width() - 1);
  const int y1 = std::min(y0 + 1, m.height() - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  return (1 - fx) * (1 - fy) * m.at(y0, x0, c) + fx * (1 - fy) * m.at(y0, x1, c) + (1 - fx) * fy * m.at(y1, x0, c) +
         fx * fy * m.at(y1, x1, c);
}

// Align-corners-false resample written per output pixel.
double resize_oracle(const FeatureMap& m, int nh, int nw, int oy, int ox, int c) {
  double sy = (oy + 0.5) * m.height() / nh - 0.5;
  double sx = (ox + 0.5) * m.width() / nw - 0.5;
  sy = std::clamp(sy, 0.0, static_cast<double>(m.height() - 1));
  sx = std::clamp(sx, 0.0, static_cast<double>(m.width() - 1));
  return bilinear_oracle(m, sx, sy, c);
}

}  // namespace

TEST_CASE("bilinear sample at grid points returns the texel") {
  std::mt19937_64 rng(1);
  const FeatureMap m = testing::random_map(rng, 5, 6, 3);
  const Sample s = bilinear_sample(m, 2, 3);
  CHECK(s.in_bounds);
  for (int c = 0; c < 3; ++c) CHECK(s.value[static_cast<std::size_t>(c)] == m.at(3, 2, c));
}

TEST_CASE("bilinear sample midpoint and formula") {
  const FeatureMap row(1, 2, 1, std::vector<double>{0.0, 1.0});
  CHECK(bilinear_sample(row, 0.5, 0.0).value[0] == 0.5);

  const FeatureMap sq(2, 2, 1, std::vector<double>{0.0, 1.0, 2.0, 3.0});
  const double expected = 0.75 * 0.25 * 0.0 + 0.25 * 0.25 * 1.0 + 0.75 * 0.75 * 2.0 + 0.25 * 0.75 * 3.0;
  CHECK(std::abs(bilinear_sample(sq, 0.25, 0.75).value[0] - expected) < 1e-12);
}

TEST_CASE("bilinear sample out of bounds and non-finite") {
  const FeatureMap m(3, 3, 2, 1.0);
  const Sample s = bilinear_sample(m, 2.5, 1.0);
  CHECK_FALSE(s.in_bounds);
  CHECK(s.value == std::vector<double>{0.0, 0.0});
  CHECK_FALSE(bilinear_sample(m, 1.0, -0.01).in_bounds);
  CHECK(bilinear_sample(m, 2.0, 2.0).in_bounds);
  CHECK_THROWS_AS(bilinear_sample(m, std::nan(""), 0.0), Error);
}

TEST_CASE("bilinear sample stays inside its support envelope") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 6.0);
  const FeatureMap m = testing::random_map(rng, 7, 7, 2);
  for (int i = 0; i < 2000; ++i) {
    const double x = u(rng), y = u(rng);
    const Sample s = bilinear_sample(m, x, y);
    const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
    for (int c = 0; c < 2; ++c) {
      double lo = 1e9, hi = -1e9;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const double v = m.at(std::min(y0 + dy, 6), std::min(x0 + dx, 6), c);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      }
      CHECK(s.value[static_cast<std::size_t>(c)] >= lo);
      CHECK(s.value[static_cast<std::size_t>(c)] <= hi);
      CHECK(std::abs(s.value[static_cast<std::size_t>(c)] - bilinear_oracle(m, x, y, c)) < 1e-12);
    }
  }
}

TEST_CASE("resize identity, constants and ramp oracle") {
  std::mt19937_64 rng(3);
  const FeatureMap m = testing::random_map(rng, 4, 5, 2);
  CHECK(resize_bilinear(m, 4, 5) == m);

  const FeatureMap k(9, 7, 3, 0.3712);
  for (auto [h, w] : {std::pair{3, 2}, std::pair{17, 31}, std::pair{1, 1}}) {
    const FeatureMap r = resize_bilinear(k, h, w);
    for (double v : r.data()) CHECK(v == 0.3712);
  }
  const FeatureMap round = resize_bilinear(resize_bilinear(resize_bilinear(k, 3, 3), 13, 11), 5, 4);
  for (double v : round.data()) CHECK(v == 0.3712);

  FeatureMap ramp(4, 4, 1);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) ramp.at(y, x, 0) = 4 * y + x;
  }
  const FeatureMap small = resize_bilinear(ramp, 2, 2);
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 2; ++x) CHECK(std::abs(small.at(y, x, 0) - resize_oracle(ramp, 2, 2, y, x, 0)) < 1e-12);
  }
  CHECK(small.at(0, 0, 0) == doctest::Approx(2.5));

  const FeatureMap odd = testing::random_map(rng, 6, 9, 2);
  const FeatureMap up = resize_bilinear(odd, 11, 4);
  for (int y = 0; y < 11; ++y) {
    for (int x = 0; x < 4; ++x) {
      for (int c = 0; c < 2; ++c) CHECK(std::abs(up.at(y, x, c) - resize_oracle(odd, 11, 4, y, x, c)) < 1e-12);
    }
  }
}

TEST_CASE("scale_flow") {
  for (auto [h, w] : {std::pair{8, 8}, std::pair{3, 5}, std::pair{64, 64}}) {
    CHECK(scale_flow(FlowField(64, 64), h, w).is_zero());
  }
  const FlowField c = scale_flow(FlowField(64, 64, 8.0, 0.0), 8, 8);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      CHECK(c.u(y, x) == 1.0);
      CHECK(c.v(y, x) == 0.0);
    }
  }

  std::mt19937_64 rng(4);
  FlowField f(6, 10);
  FeatureMap up(6, 10, 1), vp(6, 10, 1);
  std::uniform_real_distribution<double> d(-3, 3);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 10; ++x) {
      f.u(y, x) = up.at(y, x, 0) = d(rng);
      f.v(y, x) = vp.at(y, x, 0) = d(rng);
    }
  }
  const FlowField s = scale_flow(f, 3, 4);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) {
      CHECK(std::abs(s.u(y, x) - resize_oracle(up, 3, 4, y, x, 0) * 0.4) < 1e-12);
      CHECK(std::abs(s.v(y, x) - resize_oracle(vp, 3, 4, y, x, 0) * 0.5) < 1e-12);
    }
  }
}

TEST_CASE("txf round trips are bit-exact") {
  testing::TempDir dir("txf");
  std::mt19937_64 rng(5);
  const FeatureMap m = testing::random_map(rng, 3, 4, 5);
  write_txf(m, dir.path() / "m.txf");
  CHECK(read_feature_map(dir.path() / "m.txf") == m);

  FlowField f(4, 3);
  f.u(1, 2) = 0.1;
  f.v(3, 0) = -1.0 / 3.0;
  write_txf(f, dir.path() / "f.txf");
  CHECK(read_flow_field(dir.path() / "f.txf") == f);

  const BinaryMask b = testing::random_mask(rng, 5, 7);
  write_txf(b, dir.path() / "b.txf");
  CHECK(read_binary_mask(dir.path() / "b.txf") == b);

  const FeatureMap one(2, 3, 1, 0.25);
  write_txf(one, dir.path() / "f32.txf", TxfDtype::F32);
  CHECK(read_feature_map(dir.path() / "f32.txf") == one);
}

TEST_CASE("txf header arithmetic and error kinds") {
  Tensor t;
  t.dtype = TxfDtype::F32;
  t.dims = {2, 2, 3};
  t.values.assign(12, 1.5);
  auto bytes = encode_txf(t);
  CHECK(bytes.size() == 4 + 1 + 1 + 3 * 8 + 12 * 4);
  CHECK(decode_txf(bytes).element_count() == 12);

  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  auto bad_magic = bytes;
  bad_magic[0] = std::byte{'X'};
  CHECK(code_of([&] { decode_txf(bad_magic); }) == ErrorCode::BadMagic);
  auto bad_dtype = bytes;
  bad_dtype[4] = std::byte{9};
  CHECK(code_of([&] { decode_txf(bad_dtype); }) == ErrorCode::UnknownDtype);
  auto short_payload = bytes;
  short_payload.resize(short_payload.size() - 1);
  CHECK(code_of([&] { decode_txf(short_payload); }) == ErrorCode::TruncatedPayload);

  Tensor mask = to_tensor(BinaryMask(2, 2, true));
  CHECK(code_of([&] { to_feature_map(mask); }) == ErrorCode::DtypeMismatch);
}

TEST_CASE("png round trip") {
  testing::TempDir dir("png");
  FeatureMap img(3, 4, 3);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) {
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<double>((y * 40 + x * 17 + c * 60) % 256) / 255.0;
    }
  }
  write_png(img, dir.path() / "a.png");
  CHECK(read_png_rgb(dir.path() / "a.png") == img);

  BinaryMask m(4, 5);
  m.set(1, 3, true);
  m.set(2, 0, true);
  write_png(m, dir.path() / "m.png");
  CHECK(read_png_mask(dir.path() / "m.png") == m);
  CHECK(read_mask_file(dir.path() / "m.png") == m);
}
