#include "amodal/error.hpp"

namespace amodal {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::DimensionMismatch: return "dimension-mismatch";
    case ErrorCode::NonFinite: return "non-finite";
    case ErrorCode::OutOfRange: return "out-of-range";
    case ErrorCode::BadMagic: return "bad-magic";
    case ErrorCode::UnknownDtype: return "unknown-dtype";
    case ErrorCode::DtypeMismatch: return "dtype-mismatch";
    case ErrorCode::TruncatedPayload: return "truncated-payload";
    case ErrorCode::Io: return "io";
    case ErrorCode::DegenerateGeometry: return "degenerate-geometry";
    case ErrorCode::EmptyProjection: return "empty-projection";
    case ErrorCode::EmptyMask: return "empty-mask";
    case ErrorCode::UndefinedIoU: return "undefined-iou";
    case ErrorCode::MissingCapability: return "missing-capability";
    case ErrorCode::Backend: return "backend";
    case ErrorCode::BackendTimeout: return "backend-timeout";
    case ErrorCode::Protocol: return "protocol";
    case ErrorCode::Schema: return "schema";
    case ErrorCode::Divergence: return "divergence";
  }
  return "unknown";
}

}  // namespace amodal
