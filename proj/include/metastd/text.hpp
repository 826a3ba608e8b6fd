#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace metastd::text {

std::string_view trim(std::string_view s);

// ASCII case fold; bytes >= 0x80 pass through unchanged.
std::string fold_case(std::string_view s);

// Case-fold, trim, and collapse internal whitespace runs to one space.
std::string normalize_for_match(std::string_view s);

std::vector<std::string> split(std::string_view s, char delim);

bool starts_with_icase(std::string_view s, std::string_view prefix);

// RFC 3986 unreserved characters pass through, everything else is %XX.
std::string percent_encode(std::string_view s);

// Canonical cache key: operation name followed by parameters in sorted order.
std::string canonical_key(std::string_view operation,
                          const std::map<std::string, std::string>& params);

std::string sha256_hex(std::string_view data);

}  // namespace metastd::text
