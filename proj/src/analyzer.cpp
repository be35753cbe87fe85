#include "legalrag/analyzer.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <mutex>
#include <stdexcept>

namespace legalrag {

namespace unicode {

std::vector<char32_t> decode_utf8(std::string_view text) {
    std::vector<char32_t> out;
    out.reserve(text.size());
    std::size_t i = 0;
    const auto n = text.size();
    while (i < n) {
        const auto b0 = static_cast<unsigned char>(text[i]);
        char32_t cp = 0;
        std::size_t len = 0;
        if (b0 < 0x80) {
            cp = b0;
            len = 1;
        } else if ((b0 & 0xE0) == 0xC0) {
            cp = b0 & 0x1F;
            len = 2;
        } else if ((b0 & 0xF0) == 0xE0) {
            cp = b0 & 0x0F;
            len = 3;
        } else if ((b0 & 0xF8) == 0xF0) {
            cp = b0 & 0x07;
            len = 4;
        } else {
            out.push_back(0xFFFD);
            ++i;
            continue;
        }
        if (i + len > n) {
            out.push_back(0xFFFD);
            ++i;
            continue;
        }
        bool ok = true;
        for (std::size_t k = 1; k < len; ++k) {
            const auto b = static_cast<unsigned char>(text[i + k]);
            if ((b & 0xC0) != 0x80) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (b & 0x3F);
        }
        if (!ok || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF) ||
            (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000)) {
            out.push_back(0xFFFD);
            ++i;
            continue;
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp <= 0x7F) {
        out.push_back(static_cast<char>(cp));
    } else if (cp <= 0x7FF) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp <= 0xFFFF) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

bool is_cjk(char32_t cp) {
    // Han ideographs (URO + extensions + compatibility), kana, hangul.
    return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
           (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x20000 && cp <= 0x2FA1F) ||
           (cp >= 0x3040 && cp <= 0x30FF) || (cp >= 0x31F0 && cp <= 0x31FF) ||
           (cp >= 0xAC00 && cp <= 0xD7AF) || (cp >= 0x1100 && cp <= 0x11FF);
}

}  // namespace unicode

namespace {

const icu::Normalizer2& nfkc() {
    static const icu::Normalizer2* instance = [] {
        UErrorCode ec = U_ZERO_ERROR;
        const icu::Normalizer2* n = icu::Normalizer2::getNFKCInstance(ec);
        if (U_FAILURE(ec) || n == nullptr) {
            throw std::runtime_error("ICU NFKC normalizer unavailable");
        }
        return n;
    }();
    return *instance;
}

bool is_space_cp(char32_t cp) {
    if (cp <= 0x7F) {
        return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v';
    }
    return u_isUWhiteSpace(static_cast<UChar32>(cp)) != 0;
}

bool is_punct_or_symbol(char32_t cp) {
    const int8_t type = u_charType(static_cast<UChar32>(cp));
    switch (type) {
        case U_DASH_PUNCTUATION:
        case U_START_PUNCTUATION:
        case U_END_PUNCTUATION:
        case U_CONNECTOR_PUNCTUATION:
        case U_OTHER_PUNCTUATION:
        case U_INITIAL_PUNCTUATION:
        case U_FINAL_PUNCTUATION:
        case U_MATH_SYMBOL:
        case U_CURRENCY_SYMBOL:
        case U_MODIFIER_SYMBOL:
        case U_OTHER_SYMBOL:
            return true;
        default:
            return false;
    }
}

/// NFKC + simple lowercase fold, no whitespace handling.
std::u32string fold(std::string_view text) {
    icu::UnicodeString in = icu::UnicodeString::fromUTF8(
        icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
    UErrorCode ec = U_ZERO_ERROR;
    icu::UnicodeString norm = nfkc().normalize(in, ec);
    if (U_FAILURE(ec)) throw std::runtime_error("NFKC normalization failed");

    std::u32string out;
    out.reserve(static_cast<std::size_t>(norm.length()));
    for (int32_t i = 0; i < norm.length();) {
        const UChar32 cp = norm.char32At(i);
        // Simple (locale-independent) case mapping keeps the fold deterministic.
        out.push_back(static_cast<char32_t>(u_tolower(cp)));
        i += U16_LENGTH(cp);
    }
    return out;
}

std::string encode_utf8(const std::u32string& cps) {
    std::string out;
    out.reserve(cps.size() * 3);
    for (char32_t cp : cps) unicode::append_utf8(out, cp);
    return out;
}

}  // namespace

std::string normalize(std::string_view text) {
    const std::u32string folded = fold(text);
    std::u32string collapsed;
    collapsed.reserve(folded.size());
    bool pending_space = false;
    for (char32_t cp : folded) {
        if (is_space_cp(cp)) {
            if (!collapsed.empty()) pending_space = true;
            continue;
        }
        if (pending_space) {
            collapsed.push_back(U' ');
            pending_space = false;
        }
        collapsed.push_back(cp);
    }
    return encode_utf8(collapsed);
}

std::vector<std::string> tokenize(std::string_view text, const AnalyzerConfig& config) {
    std::u32string cps;
    if (config.lowercase) {
        cps = fold(text);
    } else {
        const auto decoded = unicode::decode_utf8(text);
        cps.assign(decoded.begin(), decoded.end());
    }

    std::vector<std::string> tokens;
    const bool bigram_mode = config.mode == TokenizerMode::CjkBigram;

    std::u32string word;
    auto flush_word = [&] {
        if (!word.empty()) {
            tokens.push_back(encode_utf8(word));
            word.clear();
        }
    };

    std::u32string cjk_run;
    auto flush_cjk = [&] {
        if (cjk_run.empty()) return;
        if (cjk_run.size() == 1) {
            tokens.push_back(encode_utf8(cjk_run));
        } else {
            for (std::size_t i = 0; i + 1 < cjk_run.size(); ++i) {
                std::string bigram;
                unicode::append_utf8(bigram, cjk_run[i]);
                unicode::append_utf8(bigram, cjk_run[i + 1]);
                tokens.push_back(std::move(bigram));
            }
        }
        cjk_run.clear();
    };

    for (char32_t cp : cps) {
        if (is_space_cp(cp)) {
            flush_word();
            flush_cjk();
            continue;
        }
        if (is_punct_or_symbol(cp)) {
            flush_word();
            flush_cjk();
            if (!config.strip_punctuation) {
                std::string one;
                unicode::append_utf8(one, cp);
                tokens.push_back(std::move(one));
            }
            continue;
        }
        if (bigram_mode && unicode::is_cjk(cp)) {
            flush_word();
            cjk_run.push_back(cp);
            continue;
        }
        flush_cjk();
        word.push_back(cp);
    }
    flush_word();
    flush_cjk();
    return tokens;
}

std::size_t codepoint_count(std::string_view text) {
    return unicode::decode_utf8(text).size();
}

}  // namespace legalrag
