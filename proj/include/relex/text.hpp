#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace relex {

enum class Language { english, chinese };

Language language_from_string(std::string_view name);
std::string to_string(Language language);

namespace text {

// Unicode canonical composition. Invalid UTF-8 sequences become U+FFFD.
std::string nfc(std::string_view s);

// Full Unicode case folding followed by NFC.
std::string case_fold(std::string_view s);

// Strips leading/trailing Unicode whitespace and collapses interior runs to a
// single ASCII space.
std::string squeeze_whitespace(std::string_view s);

std::string trim(std::string_view s);

// Number of code points.
std::size_t length(std::string_view s);

// Cuts to at most `max_code_points` code points without splitting a sequence.
std::string truncate(std::string_view s, std::size_t max_code_points);

std::vector<std::string> split(std::string_view s, char delimiter);

bool starts_with_word_char(std::string_view s);
bool ends_with_word_char(std::string_view s);

// Word tokens (English) or character bigrams (Chinese) used by the
// statistical retrievers and by lexical overlap ranking.
std::vector<std::string> tokenize(std::string_view s, Language language);

// Length in tokens (English, whitespace separated) or code points (Chinese).
std::size_t sentence_length(std::string_view s, Language language);

}  // namespace text
}  // namespace relex
