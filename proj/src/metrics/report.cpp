#include "amodal/metrics/report.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <fmt/format.h>

#include "amodal/error.hpp"

namespace amodal {

void MetricReport::add(const std::string& name, std::vector<int> frames, std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, fmt::format("report: metric '{}' has no values", name));
  if (frames.size() != values.size()) {
    throw Error(ErrorCode::DimensionMismatch, fmt::format("report: metric '{}' frame/value count differs", name));
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  metrics.push_back({name, std::move(frames), std::move(values), mean});
}

const MetricSeries* MetricReport::find(const std::string& name) const {
  for (const auto& m : metrics) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["config"] = config;
  j["notes"] = notes;
  j["metrics"] = nlohmann::json::array();
  for (const auto& m : metrics) {
    j["metrics"].push_back({{"name", m.name}, {"frames", m.frames}, {"values", m.values}, {"mean", m.aggregate}});
  }
  return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  try {
    r.config = j.value("config", nlohmann::json::object());
    r.notes = j.value("notes", std::vector<std::string>{});
    for (const auto& m : j.at("metrics")) {
      r.metrics.push_back({m.at("name").get<std::string>(), m.at("frames").get<std::vector<int>>(),
                           m.at("values").get<std::vector<double>>(), m.at("mean").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Schema, fmt::format("report: {}", e.what()));
  }
  return r;
}

std::string MetricReport::to_table() const {
  static const std::vector<std::string> order{kMetricIoU, kMetricClip, kMetricWarp, kMetricTC, kMetricPsnr, kMetricSsim};
  std::vector<const MetricSeries*> cols;
  for (const auto& name : order) {
    if (const auto* m = find(name)) cols.push_back(m);
  }
  for (const auto& m : metrics) {
    if (std::find(order.begin(), order.end(), m.name) == order.end()) cols.push_back(&m);
  }

  std::set<int> frames;
  std::vector<std::map<int, double>> lookup;
  for (const auto* m : cols) {
    auto& l = lookup.emplace_back();
    for (std::size_t i = 0; i < m->frames.size(); ++i) {
      l[m->frames[i]] = m->values[i];
      frames.insert(m->frames[i]);
    }
  }

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"frame"};
  for (const auto* m : cols) header.push_back(m->name);
  rows.push_back(header);
  for (int f : frames) {
    std::vector<std::string> row{fmt::format("{}", f)};
    for (const auto& l : lookup) {
      const auto it = l.find(f);
      row.push_back(it == l.end() ? "-" : fmt::format("{:.4f}", it->second));
    }
    rows.push_back(row);
  }
  std::vector<std::string> mean{"mean"};
  for (const auto* m : cols) mean.push_back(fmt::format("{:.4f}", m->aggregate));
  rows.push_back(mean);

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (const auto& note : notes) out += "# " + note + "\n";
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out += c == 0 ? fmt::format("{:<{}}", row[c], width[c]) : fmt::format("  {:>{}}", row[c], width[c]);
    }
    out += "\n";
  }
  return out;
}

}  // namespace amodal
