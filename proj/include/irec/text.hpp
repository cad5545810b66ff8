#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace irec {

// Splits UTF-8 text into case-folded tokens. A token is a maximal run of
// letters, marks and numbers (any script, so "x²" and "sin" survive);
// everything else separates. Invalid UTF-8 bytes are treated as separators.
std::vector<std::string> tokenize(std::string_view text);

// NFC normalization followed by full Unicode case folding and trimming of
// surrounding whitespace. Used as the tag-name dedup key.
std::string normalize_name(std::string_view name);

// FNV-1a, 64-bit. Stable across platforms and runs.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;

std::string to_hex(std::uint64_t value);

}  // namespace irec
