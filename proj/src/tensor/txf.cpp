#include "amodal/tensor/txf.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "amodal/error.hpp"

namespace amodal {

static_assert(std::endian::native == std::endian::little, "TXF payload codec assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'T', 'X', 'F', '1'};

bool known_dtype(std::uint8_t code) { return code >= 1 && code <= 4; }

void put_u64(std::vector<std::byte>& out, std::uint64_t value) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((value >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64(std::span<const std::byte> in, std::size_t offset) {
  std::uint64_t value = 0;
  for (int i = 0; i < 8; ++i) {
    value |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(in[offset + i])) << (8 * i);
  }
  return value;
}

}  // namespace

std::size_t dtype_size(TxfDtype dtype) {
  switch (dtype) {
    case TxfDtype::F32: return 4;
    case TxfDtype::U8: return 1;
    case TxfDtype::Bool: return 1;
    case TxfDtype::F64: return 8;
  }
  throw Error(ErrorCode::UnknownDtype, "unknown TXF dtype");
}

std::uint64_t Tensor::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<std::byte> encode_txf(const Tensor& tensor) {
  if (tensor.dims.size() > 255) throw Error(ErrorCode::InvalidArgument, "TXF supports at most 255 dims");
  const std::uint64_t n = tensor.element_count();
  const std::size_t have = tensor.is_float() ? tensor.values.size() : tensor.bytes.size();
  if (have != n) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("TXF encode: {} elements for shape holding {}", have, n));
  }
  std::vector<std::byte> out;
  out.reserve(6 + 8 * tensor.dims.size() + n * dtype_size(tensor.dtype));
  for (char ch : kMagic) out.push_back(static_cast<std::byte>(ch));
  out.push_back(static_cast<std::byte>(tensor.dtype));
  out.push_back(static_cast<std::byte>(tensor.dims.size()));
  for (auto d : tensor.dims) put_u64(out, d);

  switch (tensor.dtype) {
    case TxfDtype::F32:
      for (double v : tensor.values) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((bits >> (8 * i)) & 0xffu));
      }
      break;
    case TxfDtype::F64:
      for (double v : tensor.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
      break;
    case TxfDtype::U8:
    case TxfDtype::Bool:
      for (auto b : tensor.bytes) out.push_back(static_cast<std::byte>(b));
      break;
  }
  return out;
}

Tensor decode_txf(std::span<const std::byte> buffer) {
  if (buffer.size() < 4 || std::memcmp(buffer.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::BadMagic, "TXF: bad magic");
  }
  if (buffer.size() < 6) throw Error(ErrorCode::TruncatedPayload, "TXF: truncated header");
  const auto code = std::to_integer<std::uint8_t>(buffer[4]);
  if (!known_dtype(code)) throw Error(ErrorCode::UnknownDtype, fmt::format("TXF: unknown dtype code {}", code));
  Tensor t;
  t.dtype = static_cast<TxfDtype>(code);
  const std::size_t ndim = std::to_integer<std::uint8_t>(buffer[5]);
  std::size_t offset = 6;
  if (buffer.size() < offset + 8 * ndim) throw Error(ErrorCode::TruncatedPayload, "TXF: truncated dims");
  t.dims.resize(ndim);
  for (std::size_t i = 0; i < ndim; ++i, offset += 8) t.dims[i] = get_u64(buffer, offset);

  const std::uint64_t n = t.element_count();
  const std::size_t esize = dtype_size(t.dtype);
  const std::size_t payload = buffer.size() - offset;
  if (n > payload / esize || payload < n * esize) {
    throw Error(ErrorCode::TruncatedPayload,
                fmt::format("TXF: payload holds {} bytes, shape needs {}", payload, n * esize));
  }
  switch (t.dtype) {
    case TxfDtype::F32:
      t.values.resize(n);
      for (std::uint64_t i = 0; i < n; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) {
          bits |= static_cast<std::uint32_t>(std::to_integer<std::uint8_t>(buffer[offset + 4 * i + b])) << (8 * b);
        }
        t.values[i] = static_cast<double>(std::bit_cast<float>(bits));
      }
      break;
    case TxfDtype::F64:
      t.values.resize(n);
      for (std::uint64_t i = 0; i < n; ++i) t.values[i] = std::bit_cast<double>(get_u64(buffer, offset + 8 * i));
      break;
    case TxfDtype::U8:
    case TxfDtype::Bool:
      t.bytes.resize(n);
      for (std::uint64_t i = 0; i < n; ++i) t.bytes[i] = std::to_integer<std::uint8_t>(buffer[offset + i]);
      break;
  }
  return t;
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open {}", path.string()));
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_txf(std::as_bytes(std::span(raw)));
}

void write_tensor(const Tensor& tensor, const std::filesystem::path& path) {
  const auto bytes = encode_txf(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, fmt::format("cannot write {}", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, fmt::format("short write to {}", path.string()));
}

Tensor to_tensor(const FeatureMap& map, TxfDtype dtype) {
  if (dtype != TxfDtype::F32 && dtype != TxfDtype::F64) {
    throw Error(ErrorCode::DtypeMismatch, "feature maps are stored as f32 or f64");
  }
  Tensor t;
  t.dtype = dtype;
  t.dims = {static_cast<std::uint64_t>(map.height()), static_cast<std::uint64_t>(map.width()),
            static_cast<std::uint64_t>(map.channels())};
  t.values.assign(map.data().begin(), map.data().end());
  return t;
}

Tensor to_tensor(const FlowField& flow, TxfDtype dtype) {
  if (dtype != TxfDtype::F32 && dtype != TxfDtype::F64) {
    throw Error(ErrorCode::DtypeMismatch, "flow fields are stored as f32 or f64");
  }
  Tensor t;
  t.dtype = dtype;
  t.dims = {static_cast<std::uint64_t>(flow.height()), static_cast<std::uint64_t>(flow.width()), 2};
  t.values.resize(flow.u_plane().size() * 2);
  for (std::size_t i = 0; i < flow.u_plane().size(); ++i) {
    t.values[2 * i] = flow.u_plane()[i];
    t.values[2 * i + 1] = flow.v_plane()[i];
  }
  return t;
}

Tensor to_tensor(const BinaryMask& mask) {
  Tensor t;
  t.dtype = TxfDtype::Bool;
  t.dims = {static_cast<std::uint64_t>(mask.height()), static_cast<std::uint64_t>(mask.width())};
  t.bytes.assign(mask.bits().begin(), mask.bits().end());
  return t;
}

void write_txf(const FeatureMap& map, const std::filesystem::path& path, TxfDtype dtype) {
  write_tensor(to_tensor(map, dtype), path);
}

void write_txf(const FlowField& flow, const std::filesystem::path& path, TxfDtype dtype) {
  write_tensor(to_tensor(flow, dtype), path);
}

void write_txf(const BinaryMask& mask, const std::filesystem::path& path) {
  write_tensor(to_tensor(mask), path);
}

FeatureMap to_feature_map(const Tensor& tensor) {
  if (!tensor.is_float()) throw Error(ErrorCode::DtypeMismatch, "TXF: feature map needs a float dtype");
  if (tensor.dims.size() == 2) {
    return FeatureMap(static_cast<int>(tensor.dims[0]), static_cast<int>(tensor.dims[1]), 1, tensor.values);
  }
  if (tensor.dims.size() == 3) {
    return FeatureMap(static_cast<int>(tensor.dims[0]), static_cast<int>(tensor.dims[1]),
                      static_cast<int>(tensor.dims[2]), tensor.values);
  }
  throw Error(ErrorCode::DimensionMismatch, fmt::format("TXF: feature map needs 2 or 3 dims, got {}", tensor.dims.size()));
}

FlowField to_flow_field(const Tensor& tensor) {
  if (!tensor.is_float()) throw Error(ErrorCode::DtypeMismatch, "TXF: flow needs a float dtype");
  if (tensor.dims.size() != 3 || tensor.dims[2] != 2) {
    throw Error(ErrorCode::DimensionMismatch, "TXF: flow must be H x W x 2");
  }
  FlowField flow(static_cast<int>(tensor.dims[0]), static_cast<int>(tensor.dims[1]));
  for (std::size_t i = 0; i < flow.u_plane().size(); ++i) {
    const double u = tensor.values[2 * i];
    const double v = tensor.values[2 * i + 1];
    if (!std::isfinite(u) || !std::isfinite(v)) throw Error(ErrorCode::NonFinite, "TXF: flow contains non-finite values");
    flow.u_plane()[i] = u;
    flow.v_plane()[i] = v;
  }
  return flow;
}

BinaryMask to_binary_mask(const Tensor& tensor) {
  if (tensor.dtype != TxfDtype::Bool) throw Error(ErrorCode::DtypeMismatch, "TXF: mask needs dtype bool (3)");
  if (tensor.dims.size() != 2) throw Error(ErrorCode::DimensionMismatch, "TXF: mask must be H x W");
  BinaryMask mask(static_cast<int>(tensor.dims[0]), static_cast<int>(tensor.dims[1]));
  for (std::size_t i = 0; i < tensor.bytes.size(); ++i) mask.bits()[i] = tensor.bytes[i] ? 1 : 0;
  return mask;
}

FeatureMap read_feature_map(const std::filesystem::path& path) { return to_feature_map(read_tensor(path)); }
FlowField read_flow_field(const std::filesystem::path& path) { return to_flow_field(read_tensor(path)); }
BinaryMask read_binary_mask(const std::filesystem::path& path) { return to_binary_mask(read_tensor(path)); }

}  // namespace amodal
