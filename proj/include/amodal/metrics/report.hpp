#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace amodal {

// Column names, in table order.
inline constexpr const char* kMetricIoU = "IoU";
inline constexpr const char* kMetricClip = "CLIP-style";
inline constexpr const char* kMetricWarp = "Warp-err x1e3";
inline constexpr const char* kMetricTC = "TC";
inline constexpr const char* kMetricPsnr = "PSNR-M";
inline constexpr const char* kMetricSsim = "SSIM-M";

struct MetricSeries {
  std::string name;
  std::vector<int> frames;
  std::vector<double> values;
  double aggregate = 0.0;  // arithmetic mean of values
};

struct MetricReport {
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::string> notes;
  std::vector<MetricSeries> metrics;

  // Appends a series and computes its mean. Throws on empty or mismatched input.
  void add(const std::string& name, std::vector<int> frames, std::vector<double> values);
  const MetricSeries* find(const std::string& name) const;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);

  // Aligned columns: one row per frame and a closing "mean" row.
  std::string to_table() const;
};

}  // namespace amodal
