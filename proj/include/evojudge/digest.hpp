#pragma once

#include <string>
#include <string_view>

namespace evojudge {

// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

std::string base64_encode(std::string_view bytes);

// Throws ValidationError on malformed input (bad alphabet, bad padding).
std::string base64_decode(std::string_view text);

} // namespace evojudge
