#pragma once

#include <filesystem>

#include "amodal/tensor/grid.hpp"

namespace amodal {

// 8-bit PNG ingestion. Values are scaled by 1/255. Gray stays one channel,
// RGBA drops alpha, 16-bit input is reduced to 8 bits.
FeatureMap read_png(const std::filesystem::path& path);

// Like read_png but always returns three channels.
FeatureMap read_png_rgb(const std::filesystem::path& path);

// Any nonzero sample marks the pixel as set.
BinaryMask read_png_mask(const std::filesystem::path& path);

// Writes 1- or 3-channel maps, clamping to [0, 1] and rounding to 8 bits.
void write_png(const FeatureMap& image, const std::filesystem::path& path);
void write_png(const BinaryMask& mask, const std::filesystem::path& path);

// Mask from .png or .txf, chosen by extension.
BinaryMask read_mask_file(const std::filesystem::path& path);

}  // namespace amodal
