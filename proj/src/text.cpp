#include "relex/text.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "relex/error.hpp"

namespace relex {

Language language_from_string(std::string_view name) {
    if (name == "en" || name == "english") return Language::english;
    if (name == "zh" || name == "chinese") return Language::chinese;
    throw ConfigError("unknown language '" + std::string(name) + "' (expected en or zh)");
}

std::string to_string(Language language) {
    return language == Language::english ? "en" : "zh";
}

namespace text {
namespace {

std::string to_utf8(const icu::UnicodeString& u) {
    std::string out;
    u.toUTF8String(out);
    return out;
}

const icu::Normalizer2& nfc_instance() {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* n = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status) || n == nullptr) throw Error("ICU NFC normalizer unavailable");
    return *n;
}

icu::UnicodeString nfc_unicode(const icu::UnicodeString& u) {
    UErrorCode status = U_ZERO_ERROR;
    icu::UnicodeString out = nfc_instance().normalize(u, status);
    if (U_FAILURE(status)) throw Error("NFC normalization failed");
    return out;
}

// Decodes the code point at byte offset `i`, advancing `i`. Malformed input
// yields a negative value, matching ICU's U8_NEXT convention.
UChar32 next_code_point(std::string_view s, std::size_t& i) {
    UChar32 c;
    auto offset = static_cast<int32_t>(i);
    U8_NEXT(reinterpret_cast<const uint8_t*>(s.data()), offset, static_cast<int32_t>(s.size()), c);
    i = static_cast<std::size_t>(offset);
    return c;
}

bool is_space(UChar32 c) { return c >= 0 && u_isUWhiteSpace(c); }

bool is_word_code_point(UChar32 c) {
    return c >= 0 && u_isalnum(c) && !u_hasBinaryProperty(c, UCHAR_IDEOGRAPHIC);
}

void append_code_point(std::string& out, UChar32 c) {
    icu::UnicodeString u(c);
    u.toUTF8String(out);
}

}  // namespace

std::string nfc(std::string_view s) {
    return to_utf8(nfc_unicode(icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())))));
}

std::string case_fold(std::string_view s) {
    icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
    u.foldCase(U_FOLD_CASE_DEFAULT);
    return to_utf8(nfc_unicode(u));
}

std::string squeeze_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    std::size_t i = 0;
    while (i < s.size()) {
        std::size_t start = i;
        UChar32 c = next_code_point(s, i);
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        if (c < 0) {
            append_code_point(out, 0xFFFD);
        } else {
            out.append(s.substr(start, i - start));
        }
    }
    return out;
}

std::string trim(std::string_view s) {
    std::size_t begin = 0;
    std::size_t end = s.size();
    std::size_t i = 0;
    bool seen = false;
    while (i < s.size()) {
        std::size_t start = i;
        UChar32 c = next_code_point(s, i);
        if (!is_space(c)) {
            if (!seen) begin = start;
            seen = true;
            end = i;
        }
    }
    if (!seen) return {};
    return std::string(s.substr(begin, end - begin));
}

std::size_t length(std::string_view s) {
    std::size_t n = 0;
    std::size_t i = 0;
    while (i < s.size()) {
        next_code_point(s, i);
        ++n;
    }
    return n;
}

std::string truncate(std::string_view s, std::size_t max_code_points) {
    std::size_t n = 0;
    std::size_t i = 0;
    while (i < s.size() && n < max_code_points) {
        next_code_point(s, i);
        ++n;
    }
    return std::string(s.substr(0, i));
}

std::vector<std::string> split(std::string_view s, char delimiter) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(delimiter, start);
        if (pos == std::string_view::npos) {
            parts.emplace_back(s.substr(start));
            break;
        }
        parts.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return parts;
}

bool starts_with_word_char(std::string_view s) {
    std::size_t i = 0;
    return !s.empty() && is_word_code_point(next_code_point(s, i));
}

bool ends_with_word_char(std::string_view s) {
    if (s.empty()) return false;
    std::size_t i = s.size() - 1;
    while (i > 0 && (static_cast<unsigned char>(s[i]) & 0xC0) == 0x80) --i;
    return is_word_code_point(next_code_point(s, i));
}

std::vector<std::string> tokenize(std::string_view s, Language language) {
    std::vector<std::string> tokens;
    if (language == Language::english) {
        std::string folded = case_fold(s);
        std::string current;
        std::size_t i = 0;
        while (i < folded.size()) {
            std::size_t start = i;
            UChar32 c = next_code_point(folded, i);
            if (c >= 0 && u_isalnum(c)) {
                current.append(folded, start, i - start);
            } else if (!current.empty()) {
                tokens.push_back(std::move(current));
                current.clear();
            }
        }
        if (!current.empty()) tokens.push_back(std::move(current));
        return tokens;
    }

    // Character bigrams within runs delimited by whitespace and punctuation.
    std::string normalized = nfc(s);
    std::vector<std::string> run;
    auto flush = [&] {
        if (run.size() == 1) {
            tokens.push_back(run.front());
        } else {
            for (std::size_t k = 0; k + 1 < run.size(); ++k) tokens.push_back(run[k] + run[k + 1]);
        }
        run.clear();
    };
    std::size_t i = 0;
    while (i < normalized.size()) {
        std::size_t start = i;
        UChar32 c = next_code_point(normalized, i);
        if (c < 0 || is_space(c) || u_ispunct(c)) {
            flush();
        } else {
            run.emplace_back(normalized.substr(start, i - start));
        }
    }
    flush();
    return tokens;
}

std::size_t sentence_length(std::string_view s, Language language) {
    if (language == Language::chinese) return length(squeeze_whitespace(s));
    std::size_t n = 0;
    bool in_token = false;
    std::size_t i = 0;
    while (i < s.size()) {
        UChar32 c = next_code_point(s, i);
        if (is_space(c)) {
            in_token = false;
        } else if (!in_token) {
            in_token = true;
            ++n;
        }
    }
    return n;
}

}  // namespace text
}  // namespace relex
