#include "amodal/backend.hpp"

#include <fmt/format.h>

#include "amodal/error.hpp"

namespace amodal {

std::vector<double> Embedder::embed_text(const std::string&) {
  throw Error(ErrorCode::MissingCapability, fmt::format("{} cannot embed text", describe()));
}

}  // namespace amodal
