#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "amodal/tensor/grid.hpp"

namespace amodal {

// TXF tensor file, little-endian:
//   "TXF1" | dtype u8 | ndim u8 | ndim x u64 dims | row-major payload
enum class TxfDtype : std::uint8_t {
  F32 = 1,
  U8 = 2,
  Bool = 3,
  F64 = 4,
};

std::size_t dtype_size(TxfDtype dtype);

// Untyped view of a TXF file. Float payloads are widened to double on decode.
struct Tensor {
  TxfDtype dtype = TxfDtype::F32;
  std::vector<std::uint64_t> dims;
  std::vector<double> values;      // F32 / F64
  std::vector<std::uint8_t> bytes;  // U8 / Bool

  std::uint64_t element_count() const;
  bool is_float() const { return dtype == TxfDtype::F32 || dtype == TxfDtype::F64; }
};

std::vector<std::byte> encode_txf(const Tensor& tensor);
Tensor decode_txf(std::span<const std::byte> buffer);

Tensor read_tensor(const std::filesystem::path& path);
void write_tensor(const Tensor& tensor, const std::filesystem::path& path);

// Feature maps and flows default to F64 so that round trips are bit-exact.
void write_txf(const FeatureMap& map, const std::filesystem::path& path,
               TxfDtype dtype = TxfDtype::F64);
void write_txf(const FlowField& flow, const std::filesystem::path& path,
               TxfDtype dtype = TxfDtype::F64);
void write_txf(const BinaryMask& mask, const std::filesystem::path& path);

Tensor to_tensor(const FeatureMap& map, TxfDtype dtype = TxfDtype::F64);
Tensor to_tensor(const FlowField& flow, TxfDtype dtype = TxfDtype::F64);
Tensor to_tensor(const BinaryMask& mask);

// Accepts H x W (one channel) or H x W x C float tensors.
FeatureMap to_feature_map(const Tensor& tensor);
FlowField to_flow_field(const Tensor& tensor);
BinaryMask to_binary_mask(const Tensor& tensor);

FeatureMap read_feature_map(const std::filesystem::path& path);
FlowField read_flow_field(const std::filesystem::path& path);
BinaryMask read_binary_mask(const std::filesystem::path& path);

}  // namespace amodal
