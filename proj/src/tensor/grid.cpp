#include "amodal/tensor/grid.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "amodal/error.hpp"

namespace amodal {

namespace {

void check_dims(int height, int width, int channels) {
  if (height < 1 || width < 1 || channels < 1) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("grid dims must be >= 1, got {}x{}x{}", height, width, channels));
  }
}

}  // namespace

FeatureMap::FeatureMap(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  check_dims(height, width, channels);
  if (!std::isfinite(fill)) throw Error(ErrorCode::NonFinite, "feature map fill value is not finite");
  data_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
                   static_cast<std::size_t>(channels),
               fill);
}

FeatureMap::FeatureMap(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_dims(height, width, channels);
  const std::size_t expected = static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
                               static_cast<std::size_t>(channels);
  if (data_.size() != expected) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("feature map data holds {} values, {}x{}x{} needs {}", data_.size(),
                            height, width, channels, expected));
  }
  if (!std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); })) {
    throw Error(ErrorCode::NonFinite, "feature map contains non-finite values");
  }
}

FlowField::FlowField(int height, int width, double u, double v)
    : height_(height), width_(width) {
  check_dims(height, width, 1);
  const std::size_t n = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  u_.assign(n, u);
  v_.assign(n, v);
}

bool FlowField::is_zero() const noexcept {
  auto zero = [](double d) { return d == 0.0; };
  return std::all_of(u_.begin(), u_.end(), zero) && std::all_of(v_.begin(), v_.end(), zero);
}

BinaryMask::BinaryMask(int height, int width, bool fill) : height_(height), width_(width) {
  check_dims(height, width, 1);
  bits_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill ? 1 : 0);
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count_if(bits_.begin(), bits_.end(),
                                                [](std::uint8_t b) { return b != 0; }));
}

FeatureMap to_feature_map(const BinaryMask& mask) {
  FeatureMap out(mask.height(), mask.width(), 1);
  auto dst = out.data();
  auto src = mask.bits();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] ? 1.0 : 0.0;
  return out;
}

}  // namespace amodal
