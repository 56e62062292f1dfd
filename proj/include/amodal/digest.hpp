#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace amodal {

// Lower-case hex SHA-256.
std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_hex(std::string_view text);
std::string file_digest(const std::filesystem::path& path);

// Digest over the sorted relative paths and contents of every regular file
// below `root`, skipping names listed in `exclude`.
std::string directory_digest(const std::filesystem::path& root,
                             std::span<const std::string> exclude = {});

}  // namespace amodal
