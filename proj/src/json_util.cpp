#include "finest/json_util.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "finest/error.hpp"
#include "finest/text.hpp"

namespace finest {

std::string repair_trailing_commas(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            out.push_back(c);
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
            out.push_back(c);
            continue;
        }
        if (c == ',') {
            std::size_t j = i + 1;
            while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
            if (j < text.size() && (text[j] == ']' || text[j] == '}')) continue;
        }
        out.push_back(c);
    }
    return out;
}

std::optional<std::size_t> match_bracket(std::string_view text, std::size_t begin) {
    if (begin >= text.size()) return std::nullopt;
    std::vector<char> stack;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = begin; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        switch (c) {
            case '"': in_string = true; break;
            case '[': stack.push_back(']'); break;
            case '{': stack.push_back('}'); break;
            case ']':
            case '}':
                if (stack.empty() || stack.back() != c) return std::nullopt;
                stack.pop_back();
                if (stack.empty()) return i + 1;
                break;
            default: break;
        }
    }
    return std::nullopt;
}

namespace {

std::optional<json> try_parse(std::string_view candidate) {
    json value = json::parse(candidate.begin(), candidate.end(), nullptr, false);
    if (value.is_discarded()) return std::nullopt;
    return value;
}

}  // namespace

std::optional<json> extract_json(std::string_view raw, char open, ParseMode mode,
                                 const std::function<bool(const json&)>& accept) {
    const auto ok = [&](const json& v) {
        const bool shape = open == '[' ? v.is_array() : v.is_object();
        return shape && (!accept || accept(v));
    };

    if (mode == ParseMode::strict) {
        const std::string_view body = trim(raw);
        if (body.empty() || body.front() != open) return std::nullopt;
        auto value = try_parse(body);
        if (value && ok(*value)) return value;
        return std::nullopt;
    }

    for (std::size_t pos = raw.find(open); pos != std::string_view::npos; pos = raw.find(open, pos + 1)) {
        const auto end = match_bracket(raw, pos);
        if (!end) continue;
        const std::string_view candidate = raw.substr(pos, *end - pos);
        auto value = try_parse(candidate);
        if (!value) value = try_parse(repair_trailing_commas(candidate));
        if (!value) continue;
        if (ok(*value)) return value;
        // A rejected value's nested brackets are not top-level candidates.
        pos = *end - 1;
    }
    return std::nullopt;
}

std::optional<bool> coerce_bool(const json& value) {
    if (value.is_boolean()) return value.get<bool>();
    if (value.is_string()) {
        const std::string s = to_lower_ascii(trim(value.get_ref<const std::string&>()));
        if (s == "true") return true;
        if (s == "false") return false;
    }
    return std::nullopt;
}

std::optional<long long> coerce_integer(const json& value) {
    if (value.is_number_integer()) return value.get<long long>();
    if (value.is_number_float()) {
        const double d = value.get<double>();
        if (std::isfinite(d) && std::floor(d) == d && std::fabs(d) < 1e15) return static_cast<long long>(d);
        return std::nullopt;
    }
    if (value.is_string()) {
        const std::string_view s = trim(value.get_ref<const std::string&>());
        if (s.empty()) return std::nullopt;
        long long n = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
        if (ec == std::errc{} && ptr == s.data() + s.size()) return n;
        double d = 0;
        auto [dptr, dec] = std::from_chars(s.data(), s.data() + s.size(), d);
        if (dec == std::errc{} && dptr == s.data() + s.size() && std::isfinite(d) && std::floor(d) == d &&
            std::fabs(d) < 1e15) {
            return static_cast<long long>(d);
        }
    }
    return std::nullopt;
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
    std::vector<json> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json row = json::parse(line, nullptr, false);
        if (row.is_discarded()) {
            throw Error(Errc::io_error, path.string() + ":" + std::to_string(line_no) + ": malformed JSON line");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows) {
    std::ostringstream out;
    for (const auto& row : rows) out << row.dump() << '\n';
    write_text_file(path, out.str());
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(Errc::io_error, "cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error(Errc::io_error, "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace finest
