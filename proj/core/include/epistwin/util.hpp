#pragma once
// Small shared helpers: hashing, text normalization, tab-field escaping,
// tokenization used by anchor scoring and the echo generator.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace epistwin {

// FNV-1a 64-bit. Used for dump checksums, gateway request digests, and
// labeled sub-seed derivation.
uint64_t fnv1a64(std::string_view data, uint64_t seed = 0xcbf29ce484222325ull);
std::string to_hex64(uint64_t value);

// Derive a child seed from a root seed and a component label.
uint64_t derive_seed(uint64_t root_seed, std::string_view label);

// ASCII case-fold + trim + collapse internal whitespace runs to one space.
std::string normalize_label(std::string_view text);
std::string to_lower(std::string_view text);
std::string trim(std::string_view text);

// Tab/newline/backslash escaping for the tab-delimited dump format.
std::string escape_field(std::string_view text);
std::string unescape_field(std::string_view text);

// Case-folded tokens: maximal runs of [a-z0-9] with interior '-' kept, so
// date strings like 2025-09-01 stay one token.
std::vector<std::string> tokenize(std::string_view text);

std::vector<std::string> split(std::string_view text, char sep);

bool starts_with(std::string_view text, std::string_view prefix);

// ceil(len/4): crude, deterministic token estimate for context budgeting.
std::size_t estimate_tokens(std::string_view text);

// Standard base64 with padding, for inline image attachments on the wire.
std::string base64_encode(std::string_view bytes);

}  // namespace epistwin
