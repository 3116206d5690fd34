#pragma once

#include <cstdint>
#include <string>

namespace haf {

/// Formats a double with 17 significant digits so text round-trips are exact.
/// NaN is rendered as "null" (reports embed it in JSON).
std::string format_double(double value);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

/// FNV-1a over the canonical config serialization; hex string.
std::string fnv1a_hex(const std::string& data);

}  // namespace haf
