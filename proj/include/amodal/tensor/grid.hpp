#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace amodal {

// Dense H x W x C grid of reals, row-major with channels innermost.
// Holds latents and RGB images alike; images live in [0, 1].
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int height, int width, int channels, double fill = 0.0);
  FeatureMap(int height, int width, int channels, std::vector<double> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  bool same_shape(const FeatureMap& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<double> pixel(int y, int x) {
    return {data_.data() + index(y, x, 0), static_cast<std::size_t>(channels_)};
  }
  std::span<const double> pixel(int y, int x) const {
    return {data_.data() + index(y, x, 0), static_cast<std::size_t>(channels_)};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool operator==(const FeatureMap&) const = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// Per-pixel displacement (u = column, v = row) in pixels.
class FlowField {
 public:
  FlowField() = default;
  FlowField(int height, int width, double u = 0.0, double v = 0.0);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  bool empty() const noexcept { return u_.empty(); }

  double& u(int y, int x) { return u_[index(y, x)]; }
  double u(int y, int x) const { return u_[index(y, x)]; }
  double& v(int y, int x) { return v_[index(y, x)]; }
  double v(int y, int x) const { return v_[index(y, x)]; }

  std::span<double> u_plane() noexcept { return u_; }
  std::span<const double> u_plane() const noexcept { return u_; }
  std::span<double> v_plane() noexcept { return v_; }
  std::span<const double> v_plane() const noexcept { return v_; }

  bool is_zero() const noexcept;
  bool operator==(const FlowField&) const = default;

 private:
  std::size_t index(int y, int x) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> u_;
  std::vector<double> v_;
};

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, bool fill = false);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  bool empty() const noexcept { return bits_.empty(); }
  bool same_shape(const BinaryMask& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  bool operator()(int y, int x) const { return bits_[index(y, x)] != 0; }
  void set(int y, int x, bool value) { bits_[index(y, x)] = value ? 1 : 0; }

  std::size_t count() const noexcept;
  bool none() const noexcept { return count() == 0; }

  std::span<std::uint8_t> bits() noexcept { return bits_; }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  bool operator==(const BinaryMask&) const = default;

 private:
  std::size_t index(int y, int x) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Mask as a single-channel 0/1 map.
FeatureMap to_feature_map(const BinaryMask& mask);

}  // namespace amodal
