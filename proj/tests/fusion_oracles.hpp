#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "amodal/fusion/temporal_fusion.hpp"

namespace testing {

// Softmax attention written out per location with no shared code.
inline amodal::FeatureMap attention_oracle(const amodal::FeatureMap& q, const std::vector<amodal::fusion::WarpedLatent>& nb) {
  amodal::FeatureMap out = q;
  const int C = q.channels();
  for (int y = 0; y < q.height(); ++y) {
    for (int x = 0; x < q.width(); ++x) {
      std::vector<double> logits;
      std::vector<const amodal::fusion::WarpedLatent*> rows;
      for (const auto& n : nb) {
        if (!n.validity(y, x)) continue;
        double dot = 0;
        for (int c = 0; c < C; ++c) dot += q.at(y, x, c) * n.features.at(y, x, c);
        logits.push_back(dot / std::sqrt(static_cast<double>(C)));
        rows.push_back(&n);
      }
      if (rows.empty()) continue;
      const double m = *std::max_element(logits.begin(), logits.end());
      double z = 0;
      for (double& l : logits) z += (l = std::exp(l - m));
      for (int c = 0; c < C; ++c) {
        double acc = 0;
        for (std::size_t j = 0; j < rows.size(); ++j) acc += logits[j] / z * rows[j]->features.at(y, x, c);
        out.at(y, x, c) = acc;
      }
    }
  }
  return out;
}

inline double max_abs_diff(const amodal::FeatureMap& a, const amodal::FeatureMap& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
  return d;
}

}  // namespace testing
