#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace finest {

std::string_view trim(std::string_view s) noexcept;
std::string to_lower_ascii(std::string_view s);

/// Strips trailing spaces/tabs/CR from every line; line structure is kept.
std::string strip_trailing_whitespace_per_line(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Lower-cases and collapses every run of non-alphanumeric ASCII characters
/// into a single '_' ("Non-inclusive (opinion)" -> "non_inclusive_opinion").
std::string normalize_label(std::string_view label);

/// Substitutes `{{name}}` placeholders. Throws Error(missing_variable) when a
/// placeholder has no binding; single braces pass through untouched.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars);

std::string sha256_hex(std::string_view data);

struct Sentence {
    int index = 0;  // 1-based
    std::string text;
    std::size_t begin = 0;  // byte range [begin, end) in raw
    std::size_t end = 0;
};

struct SentenceIndexedText {
    std::string raw;
    std::vector<Sentence> sentences;

    int size() const noexcept { return static_cast<int>(sentences.size()); }
    /// Sentences prefixed "[i] ", one per line.
    std::string numbered() const;
};

const std::vector<std::string>& default_abbreviations();

/// Deterministic rule-based segmentation: a sentence ends after a run of
/// terminal punctuation (. ! ? …), optionally followed by closing quotes or
/// brackets, when whitespace or end of text follows; hard newlines always
/// end a sentence. Tokens listed in `abbreviations` never end a sentence.
/// Text without any boundary becomes a single sentence.
SentenceIndexedText segment_sentences(std::string_view text,
                                      const std::vector<std::string>& abbreviations = default_abbreviations());

}  // namespace finest
