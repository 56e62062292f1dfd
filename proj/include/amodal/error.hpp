#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace amodal {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  NonFinite,
  OutOfRange,
  BadMagic,
  UnknownDtype,
  DtypeMismatch,
  TruncatedPayload,
  Io,
  DegenerateGeometry,
  EmptyProjection,
  EmptyMask,
  UndefinedIoU,
  MissingCapability,
  Backend,
  BackendTimeout,
  Protocol,
  Schema,
  Divergence,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace amodal
