#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace finest {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// How tolerant structured-output extraction is toward noisy model text.
enum class ParseMode { lenient, strict };

/// Removes commas that directly precede a closing `]` or `}` (outside string
/// literals).
std::string repair_trailing_commas(std::string_view text);

/// Returns the end offset (one past) of the bracketed value that starts at
/// `begin`, honouring string literals and escapes; nullopt when unbalanced.
std::optional<std::size_t> match_bracket(std::string_view text, std::size_t begin);

/// Finds the first top-level JSON value opening with `open` ('[' or '{')
/// that parses and satisfies `accept`.
///
/// Lenient mode scans past prose and code fences, tries every candidate
/// opening bracket in order and repairs trailing commas. Strict mode requires
/// the trimmed input to be exactly one such value.
std::optional<json> extract_json(std::string_view raw, char open, ParseMode mode,
                                 const std::function<bool(const json&)>& accept = {});

/// Accepts JSON booleans and the strings "true"/"false" in any case.
std::optional<bool> coerce_bool(const json& value);

/// Accepts integers, integral floats, and numeric strings ("4", " 4 ", "4.0").
std::optional<long long> coerce_integer(const json& value);

std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows);
void write_text_file(const std::filesystem::path& path, std::string_view content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace finest
