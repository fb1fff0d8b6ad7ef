#pragma once

#include <string>
#include <string_view>

namespace zett {

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);  // throws InvalidFormat

// True when `bytes` is well-formed UTF-8 (no overlongs, no surrogates).
bool is_valid_utf8(std::string_view bytes);

}  // namespace zett
