#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace legalrag {

enum class TokenizerMode { CjkBigram, Whitespace };

struct AnalyzerConfig {
    TokenizerMode mode = TokenizerMode::CjkBigram;
    bool lowercase = true;
    bool strip_punctuation = true;

    bool operator==(const AnalyzerConfig&) const = default;
};

/// NFKC normalization, simple per-codepoint lowercase, whitespace runs
/// collapsed to a single ASCII space, leading/trailing whitespace removed.
/// Total: never throws on any byte sequence (invalid UTF-8 -> U+FFFD).
std::string normalize(std::string_view text);

/// Deterministic tokenization. CjkBigram mode emits overlapping character
/// bigrams for contiguous CJK runs (a run of length 1 emits the single
/// character) and splits non-CJK text on whitespace/punctuation. Whitespace
/// mode splits on whitespace only (punctuation handling still applies).
/// Empty input yields an empty stream.
std::vector<std::string> tokenize(std::string_view text, const AnalyzerConfig& config = {});

/// Number of Unicode codepoints in a UTF-8 string (invalid bytes count 1).
std::size_t codepoint_count(std::string_view text);

namespace unicode {

/// Decode UTF-8 into codepoints; malformed bytes become U+FFFD.
std::vector<char32_t> decode_utf8(std::string_view text);
void append_utf8(std::string& out, char32_t cp);
bool is_cjk(char32_t cp);

}  // namespace unicode

}  // namespace legalrag
