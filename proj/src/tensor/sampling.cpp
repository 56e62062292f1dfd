#include "amodal/tensor/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "amodal/error.hpp"

namespace amodal {

bool bilinear_sample_into(const FeatureMap& map, double x, double y, std::span<double> out) {
  if (!std::isfinite(x) || !std::isfinite(y)) {
    throw Error(ErrorCode::NonFinite, "bilinear_sample: non-finite coordinate");
  }
  const int w = map.width();
  const int h = map.height();
  const int c = map.channels();
  if (x < 0.0 || y < 0.0 || x > static_cast<double>(w - 1) || y > static_cast<double>(h - 1)) {
    std::fill(out.begin(), out.end(), 0.0);
    return false;
  }
  const int x0 = std::min(static_cast<int>(std::floor(x)), w - 1);
  const int y0 = std::min(static_cast<int>(std::floor(y)), h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const auto p00 = map.pixel(y0, x0);
  const auto p01 = map.pixel(y0, x1);
  const auto p10 = map.pixel(y1, x0);
  const auto p11 = map.pixel(y1, x1);
  for (int k = 0; k < c; ++k) {
    const double top = std::lerp(p00[k], p01[k], fx);
    const double bottom = std::lerp(p10[k], p11[k], fx);
    out[k] = std::lerp(top, bottom, fy);
  }
  return true;
}

Sample bilinear_sample(const FeatureMap& map, double x, double y) {
  Sample s;
  s.value.assign(static_cast<std::size_t>(map.channels()), 0.0);
  s.in_bounds = bilinear_sample_into(map, x, y, s.value);
  return s;
}

namespace {

struct Tap {
  int i0;
  int i1;
  double frac;
};

std::vector<Tap> resize_taps(int in_size, int out_size) {
  std::vector<Tap> taps(static_cast<std::size_t>(out_size));
  const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
  for (int d = 0; d < out_size; ++d) {
    double src = (d + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
    const int i0 = std::min(static_cast<int>(std::floor(src)), in_size - 1);
    const int i1 = std::min(i0 + 1, in_size - 1);
    taps[static_cast<std::size_t>(d)] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace

FeatureMap resize_bilinear(const FeatureMap& map, int new_height, int new_width) {
  if (new_height < 1 || new_width < 1) {
    throw Error(ErrorCode::InvalidArgument, "resize_bilinear: target dims must be >= 1");
  }
  if (new_height == map.height() && new_width == map.width()) return map;

  const auto rows = resize_taps(map.height(), new_height);
  const auto cols = resize_taps(map.width(), new_width);
  const int c = map.channels();
  FeatureMap out(new_height, new_width, c);
  for (int y = 0; y < new_height; ++y) {
    const Tap& ty = rows[static_cast<std::size_t>(y)];
    for (int x = 0; x < new_width; ++x) {
      const Tap& tx = cols[static_cast<std::size_t>(x)];
      const auto p00 = map.pixel(ty.i0, tx.i0);
      const auto p01 = map.pixel(ty.i0, tx.i1);
      const auto p10 = map.pixel(ty.i1, tx.i0);
      const auto p11 = map.pixel(ty.i1, tx.i1);
      auto dst = out.pixel(y, x);
      for (int k = 0; k < c; ++k) {
        const double top = std::lerp(p00[k], p01[k], tx.frac);
        const double bottom = std::lerp(p10[k], p11[k], tx.frac);
        dst[k] = std::lerp(top, bottom, ty.frac);
      }
    }
  }
  return out;
}

FlowField scale_flow(const FlowField& flow, int new_height, int new_width) {
  if (new_height < 1 || new_width < 1) {
    throw Error(ErrorCode::InvalidArgument, "scale_flow: target dims must be >= 1");
  }
  const int h = flow.height();
  const int w = flow.width();
  FeatureMap planes(h, w, 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      planes.at(y, x, 0) = flow.u(y, x);
      planes.at(y, x, 1) = flow.v(y, x);
    }
  }
  const FeatureMap resized = resize_bilinear(planes, new_height, new_width);
  const double su = static_cast<double>(new_width) / static_cast<double>(w);
  const double sv = static_cast<double>(new_height) / static_cast<double>(h);
  FlowField out(new_height, new_width);
  for (int y = 0; y < new_height; ++y) {
    for (int x = 0; x < new_width; ++x) {
      out.u(y, x) = resized.at(y, x, 0) * su;
      out.v(y, x) = resized.at(y, x, 1) * sv;
    }
  }
  return out;
}

}  // namespace amodal
