#include "finest/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include <openssl/evp.h>

#include "finest/error.hpp"

namespace finest {

namespace {

bool is_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

constexpr std::string_view kEllipsis = "\xE2\x80\xA6";  // U+2026

// Length of the terminal mark at `pos`, 0 if none.
std::size_t terminal_at(std::string_view text, std::size_t pos) noexcept {
    const char c = text[pos];
    if (c == '.' || c == '!' || c == '?') return 1;
    if (text.substr(pos, kEllipsis.size()) == kEllipsis) return kEllipsis.size();
    return 0;
}

bool is_closer(char c) noexcept { return c == '"' || c == '\'' || c == ')' || c == ']' || c == '}'; }

// Closing quotes U+201D and U+2019 are three bytes each.
std::size_t closer_at(std::string_view text, std::size_t pos) noexcept {
    if (is_closer(text[pos])) return 1;
    if (text.substr(pos, 3) == "\xE2\x80\x9D" || text.substr(pos, 3) == "\xE2\x80\x99") return 3;
    return 0;
}

bool ends_with_abbreviation(std::string_view sentence, const std::vector<std::string>& abbreviations) {
    for (const auto& abbr : abbreviations) {
        if (abbr.empty() || sentence.size() < abbr.size()) continue;
        if (sentence.substr(sentence.size() - abbr.size()) != abbr) continue;
        // Whole-token match only: "Dr." but not "Sidr.".
        const std::size_t start = sentence.size() - abbr.size();
        if (start == 0 || is_space(sentence[start - 1]) || sentence[start - 1] == '(') return true;
    }
    return false;
}

}  // namespace

std::string_view trim(std::string_view s) noexcept {
    std::size_t b = 0;
    while (b < s.size() && is_space(s[b])) ++b;
    std::size_t e = s.size();
    while (e > b && is_space(s[e - 1])) --e;
    return s.substr(b, e - b);
}

std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string strip_trailing_whitespace_per_line(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t line_start = 0;
    while (line_start <= s.size()) {
        const std::size_t nl = s.find('\n', line_start);
        std::string_view line = s.substr(line_start, nl == std::string_view::npos ? s.npos : nl - line_start);
        std::size_t e = line.size();
        while (e > 0 && (line[e - 1] == ' ' || line[e - 1] == '\t' || line[e - 1] == '\r')) --e;
        out.append(line.substr(0, e));
        if (nl == std::string_view::npos) break;
        out.push_back('\n');
        line_start = nl + 1;
    }
    return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        parts.emplace_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out.append(sep);
        out.append(parts[i]);
    }
    return out;
}

std::string normalize_label(std::string_view label) {
    std::string out;
    bool pending_sep = false;
    for (unsigned char c : label) {
        if (std::isalnum(c)) {
            if (pending_sep && !out.empty()) out.push_back('_');
            pending_sep = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        } else {
            pending_sep = true;
        }
    }
    return out;
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const std::size_t open = tmpl.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(tmpl.substr(pos));
            break;
        }
        const std::size_t close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) {
            out.append(tmpl.substr(pos));
            break;
        }
        out.append(tmpl.substr(pos, open - pos));
        const std::string name(trim(tmpl.substr(open + 2, close - open - 2)));
        auto it = vars.find(name);
        if (it == vars.end()) throw Error(Errc::missing_variable, "template placeholder {{" + name + "}} has no value");
        out.append(it->second);
        pos = close + 2;
    }
    return out;
}

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

std::string SentenceIndexedText::numbered() const {
    std::string out;
    for (const auto& s : sentences) {
        if (!out.empty()) out.push_back('\n');
        out += "[" + std::to_string(s.index) + "] " + s.text;
    }
    return out;
}

const std::vector<std::string>& default_abbreviations() {
    static const std::vector<std::string> kAbbreviations = {"e.g.", "i.e.", "Mr.", "Mrs.", "Ms.",
                                                            "Dr.",  "vs.",  "No.", "St."};
    return kAbbreviations;
}

SentenceIndexedText segment_sentences(std::string_view text, const std::vector<std::string>& abbreviations) {
    SentenceIndexedText out;
    out.raw = std::string(text);

    std::size_t start = 0;
    const auto emit = [&](std::size_t b, std::size_t e) {
        while (b < e && is_space(text[b])) ++b;
        while (e > b && is_space(text[e - 1])) --e;
        if (b == e) return;
        Sentence s;
        s.index = static_cast<int>(out.sentences.size()) + 1;
        s.begin = b;
        s.end = e;
        s.text = std::string(text.substr(b, e - b));
        out.sentences.push_back(std::move(s));
    };

    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '\n') {
            emit(start, i);
            start = i + 1;
            ++i;
            continue;
        }
        std::size_t len = terminal_at(text, i);
        if (len == 0) {
            ++i;
            continue;
        }
        std::size_t j = i + len;
        while (j < text.size()) {
            std::size_t more = terminal_at(text, j);
            if (more == 0) more = closer_at(text, j);
            if (more == 0) break;
            j += more;
        }
        bool boundary = j == text.size() || is_space(text[j]);
        if (boundary && j < text.size()) {
            // A trailing-off ellipsis followed by lowercase continues the sentence.
            const std::string_view run = text.substr(i, j - i);
            std::size_t k = j;
            while (k < text.size() && is_space(text[k]) && text[k] != '\n') ++k;
            const bool ellipsis = run.find("...") != std::string_view::npos ||
                                  run.find("\xE2\x80\xA6") != std::string_view::npos;
            if (ellipsis && k < text.size() && std::islower(static_cast<unsigned char>(text[k]))) boundary = false;
        }
        if (boundary && !ends_with_abbreviation(text.substr(start, j - start), abbreviations)) {
            emit(start, j);
            start = j;
        }
        i = j;
    }
    emit(start, text.size());

    if (out.sentences.empty()) {
        // Whitespace-only input still yields exactly one (empty) sentence.
        Sentence s;
        s.index = 1;
        s.begin = 0;
        s.end = text.size();
        s.text = std::string(text);
        out.sentences.push_back(std::move(s));
    }
    return out;
}

}  // namespace finest
