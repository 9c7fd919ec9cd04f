#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace prunekit {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
/// FileNotFound when unreadable.
std::string file_sha256(const std::string& path);
std::string ids_digest(std::span<const std::size_t> ids);

/// Shortest round-trip-safe text for a double (17 significant digits).
std::string format_real(double v);

}  // namespace prunekit
