#pragma once

#include <span>
#include <vector>

#include "amodal/tensor/grid.hpp"

namespace amodal {

struct Sample {
  std::vector<double> value;
  bool in_bounds = false;
};

// Bilinear interpolation of the four texels around (x, y), with x a column
// and y a row coordinate measured from the centre of pixel (0, 0).
// Locations outside [0, W-1] x [0, H-1] yield zeros and in_bounds = false.
Sample bilinear_sample(const FeatureMap& map, double x, double y);

// Allocation-free variant; `out` must hold map.channels() values.
bool bilinear_sample_into(const FeatureMap& map, double x, double y, std::span<double> out);

// Align-corners-false bilinear resampling.
FeatureMap resize_bilinear(const FeatureMap& map, int new_height, int new_width);

// Resamples both displacement planes, then rescales them so they are
// expressed in target-resolution pixels.
FlowField scale_flow(const FlowField& flow, int new_height, int new_width);

}  // namespace amodal
