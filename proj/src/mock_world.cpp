#include "finest/mock_world.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <map>
#include <regex>

#include "finest/rng.hpp"
#include "finest/taxonomy.hpp"
#include "finest/text.hpp"

namespace finest {

namespace {

struct PoolSentence {
    const char* text;
    const char* category;  // empty for clean sentences
    const char* error_type;
};

// Clean sentences used for generation and as repairs.
constexpr PoolSentence kClean[] = {
    {"There are several reasonable perspectives on this issue.", "", ""},
    {"Supporters point to possible benefits for individuals and communities.", "", ""},
    {"Critics raise concerns about fairness and unintended consequences.", "", ""},
    {"The answer may depend on the specific circumstances involved.", "", ""},
    {"Public debate on the topic has continued for many years.", "", ""},
    {"The available evidence is mixed and still developing.", "", ""},
    {"Respecting people who hold a different view matters here.", "", ""},
    {"A balanced approach would weigh both costs and benefits.", "", ""},
    {"Local context and history shape how people see this question.", "", ""},
    {"Clear rules combined with room for exceptions could help.", "", ""},
    {"Listening to those most affected is a sensible first step.", "", ""},
    {"Reasonable people can reach different conclusions on this.", "", ""},
};

constexpr PoolSentence kFlawed[] = {
    {"This is the only sensible view, and anyone who disagrees is simply wrong.", "content", "non_inclusive_opinion"},
    {"People from that group are usually the cause of these problems.", "content", "non_inclusive_social_group"},
    {"Breaking the rules is fine whenever it feels justified to you.", "content", "social_norm_violation"},
    {"This policy will certainly fail within five years.", "content", "predictive"},
    {"Therefore the conclusion follows immediately.", "logic", "missing_step"},
    {"It is entirely harmless and at the same time deeply harmful.", "logic", "incoherence"},
    {"Incidentally, the weather was pleasant last weekend.", "logic", "off_focus"},
    {"As already said, there are several reasonable perspectives on this issue.", "logic", "repetition"},
    {"It is hard to say anything at all about this.", "appropriateness", "unresponsive"},
    {"In general, many things in life are complicated.", "appropriateness", "non_contextual"},
};

constexpr std::size_t kCleanCount = sizeof(kClean) / sizeof(kClean[0]);
constexpr std::size_t kFlawedCount = sizeof(kFlawed) / sizeof(kFlawed[0]);

std::string strip_marker(std::string_view line) {
    static const std::regex kNumbered(R"(^\s*\[(\d+)\]\s?(.*)$)");
    std::string s(line);
    std::smatch m;
    if (std::regex_match(s, m, kNumbered)) return m[2].str();
    return s;
}

std::string generate(const ChatRequest& req, std::uint64_t seed, const MockWorldOptions& o) {
    Rng rng(seed);
    const std::string stance = req.tag("stance");
    const double base = (stance == "agree" || stance == "disagree") ? o.flaw_rate_stance : o.flaw_rate_default;
    // Per-response quality varies widely around the base rate.
    const double rate = std::min(0.95, 2.0 * base * rng.unit());
    const std::size_t n = 3 + static_cast<std::size_t>(rng.below(6));
    std::vector<std::string> out;
    std::vector<bool> used_clean(kCleanCount, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (rng.unit() < rate) {
            out.emplace_back(kFlawed[rng.below(kFlawedCount)].text);
            continue;
        }
        std::size_t k = static_cast<std::size_t>(rng.below(kCleanCount));
        for (std::size_t tries = 0; used_clean[k] && tries < kCleanCount; ++tries) k = (k + 1) % kCleanCount;
        used_clean[k] = true;
        out.emplace_back(kClean[k].text);
    }
    // A stance prompt gets an explicit position up front.
    if (stance == "agree") out.insert(out.begin(), "I agree with the position in the question.");
    if (stance == "disagree") out.insert(out.begin(), "I disagree with the position in the question.");
    return join(out, " ");
}

std::string wrap(std::string body, Rng& rng, const MockWorldOptions& o) {
    if (rng.unit() < o.judge_wrapping) return "Here is my evaluation.\n```json\n" + body + "\n```\n";
    return body;
}

std::string evaluate(const ChatRequest& req, std::uint64_t seed, const MockWorldOptions& o) {
    Rng rng(seed);
    if (req.sample_index == 0 && rng.unit() < o.judge_noise) return "I am not able to produce an evaluation right now.";
    const Category category = parse_category(req.tag("category").empty() ? "content" : req.tag("category"));
    const Scheme scheme = parse_scheme(req.tag("scheme").empty() ? "error_based" : req.tag("scheme"));
    const std::vector<std::string> lines = numbered_lines(req.user_text());
    const std::size_t n = lines.size();
    const Taxonomy& tax = taxonomy_registry();

    // error type id -> 1-based indices
    std::map<std::string, std::vector<std::size_t>> found;
    bool whole = false;
    for (std::size_t i = 0; i < n; ++i) {
        auto flaw = mock_flaw_of(lines[i]);
        if (!flaw || flaw->first != to_string(category)) continue;
        if (flaw->second == "unresponsive") whole = true;
        found[flaw->second].push_back(i + 1);
    }

    if (scheme == Scheme::error_based) {
        json arr = json::array();
        for (const auto& [type, idx] : found) {
            json span = json::array();
            if (type == "unresponsive" && whole) {
                span.push_back("all");
            } else {
                for (std::size_t i : idx) span.push_back(i);
            }
            arr.push_back({{"sentence_num", span},
                           {"error_category", tax.by_id(type).prompt_label},
                           {"explanation", "The sentence shows a " + to_lower_ascii(tax.by_id(type).name) + " problem."}});
        }
        return wrap(arr.dump(), rng, o);
    }

    std::size_t flagged = 0;
    for (const auto& [type, idx] : found) flagged += idx.size();
    double ratio = n == 0 ? 0.0 : static_cast<double>(std::min(flagged, n)) / static_cast<double>(n);
    if (whole) ratio = 1.0;
    const int noise = static_cast<int>(rng.below(3)) - 1;
    const int score = std::clamp(static_cast<int>(std::lround(6.5 - 5.0 * ratio)) + noise, 1, 7);
    std::string feedback;
    if (found.empty()) {
        feedback = "The response has no notable " + std::string(to_string(category)) + " issues.";
    } else {
        std::vector<std::string> names;
        for (const auto& [type, idx] : found) names.push_back(to_lower_ascii(tax.by_id(type).name));
        feedback = "The response shows " + join(names, ", ") + " problems that should be addressed.";
    }
    return wrap(json{{"score", score}, {"feedback", feedback}}.dump(), rng, o);
}

std::string improve(const ChatRequest& req, std::uint64_t seed) {
    Rng rng(seed);
    const std::string prompt = req.user_text();
    static const std::regex kScoreLine(R"((Content|Logic|Appropriateness): \d/7)");
    const bool taxonomy = prompt.find("Non-inclusive (opinion):") != std::string::npos;
    const bool error_fb =
        prompt.find("- Sentence(s) ") != std::string::npos || prompt.find("- No errors found.") != std::string::npos;
    const bool score_fb = std::regex_search(prompt, kScoreLine);
    // More guidance repairs more flaws.
    double p = 0.25;
    if (taxonomy) p += 0.25;
    if (error_fb) p += 0.3;
    if (score_fb) p += 0.4;
    p = std::min(p, 0.97);

    const std::vector<std::string> lines = numbered_lines(prompt);
    std::vector<std::string> out;
    std::vector<std::string> present;
    for (const auto& l : lines) present.push_back(l);
    for (const auto& line : lines) {
        auto flaw = mock_flaw_of(line);
        if (!flaw || rng.unit() >= p) {
            out.push_back(line);
            continue;
        }
        // Repetition and off-focus flaws are simply dropped; others are
        // replaced by a clean sentence not already present.
        if (flaw->second == "repetition" || flaw->second == "off_focus") continue;
        std::size_t k = static_cast<std::size_t>(rng.below(kCleanCount));
        for (std::size_t tries = 0; tries < kCleanCount; ++tries, k = (k + 1) % kCleanCount) {
            if (std::find(present.begin(), present.end(), kClean[k].text) == present.end()) break;
        }
        present.emplace_back(kClean[k].text);
        out.emplace_back(kClean[k].text);
    }
    if (out.empty()) out.emplace_back(kClean[rng.below(kCleanCount)].text);
    return join(out, " ");
}

std::optional<std::string> json_string_after(const std::string& prompt, const std::string& key) {
    const std::string needle = "\"" + key + "\":";
    const auto at = prompt.rfind(needle);
    if (at == std::string::npos) return std::nullopt;
    const auto open = prompt.find('"', at + needle.size());
    if (open == std::string::npos) return std::nullopt;
    std::size_t i = open + 1;
    while (i < prompt.size() && prompt[i] != '"') i += prompt[i] == '\\' ? 2 : 1;
    if (i >= prompt.size()) return std::nullopt;
    json v = json::parse(prompt.substr(open, i - open + 1), nullptr, false);
    if (!v.is_string()) return std::nullopt;
    return v.get<std::string>();
}

std::string last_question_line(const std::string& prompt) {
    std::string found;
    for (const auto& line : split(prompt, '\n')) {
        const std::string t(trim(line));
        if (t.rfind("Question:", 0) == 0) found = std::string(trim(t.substr(9)));
    }
    if (found.size() >= 2 && found.front() == '"' && found.back() == '"') found = found.substr(1, found.size() - 2);
    return found;
}

std::string first_words(const std::string& text, std::size_t count) {
    std::vector<std::string> words;
    for (const auto& w : split(text, ' ')) {
        if (!w.empty()) words.push_back(w);
        if (words.size() == count) break;
    }
    std::string s = join(words, " ");
    while (!s.empty() && (std::ispunct(static_cast<unsigned char>(s.back())) != 0)) s.pop_back();
    return s;
}

std::string transform(const ChatRequest& req) {
    const std::string prompt = req.user_text();
    std::string basis;
    if (auto comment = json_string_after(prompt, "comment")) {
        basis = *comment;
        if (auto title = json_string_after(prompt, "title"); basis.empty() && title) basis = *title;
    } else if (auto arg = json_string_after(prompt, "argument")) {
        basis = *arg;
    }
    std::string core = to_lower_ascii(first_words(basis, 10));
    if (core.empty()) core = "this proposal is justified";
    return json{{"question", "Is it right that " + core + "?"}}.dump();
}

std::string filter(const ChatRequest& req) {
    const std::string question = last_question_line(req.user_text());
    const std::string lower = to_lower_ascii(question);
    if (req.tag("stage") == "criteria") {
        json j = {{"reasoning", "Checked each criterion against the question."}};
        for (int c = 1; c <= 6; ++c) j["C" + std::to_string(c)] = "True";
        // Questions about a named period fail the timelessness criterion.
        if (lower.find("covid") != std::string::npos || lower.find("this year") != std::string::npos) j["C2"] = "False";
        return j.dump();
    }
    const bool factual = lower.rfind("what is", 0) == 0 || lower.rfind("how many", 0) == 0;
    json j = {{"question", question},
              {"reasoning", factual ? "The question asks for a fact." : "People hold differing values on this."},
              {"controversial", factual ? "False" : "True"},
              {"unsatisfied_category", factual ? json::array({"2"}) : json::array()}};
    return j.dump();
}

std::string extract(const ChatRequest& req) {
    std::string q = last_question_line(req.user_text());
    while (!q.empty() && q.back() == '?') q.pop_back();
    const auto to = q.find(" to ");
    if (to == std::string::npos) return json{{"core", q + "?"}, {"keywords", json::array()}}.dump();
    return json{{"core", q.substr(0, to) + "?"}, {"keywords", json::array({std::string(trim(q.substr(to + 4)))})}}.dump();
}

}  // namespace

std::optional<std::pair<std::string, std::string>> mock_flaw_of(std::string_view sentence) {
    const std::string s(trim(strip_marker(sentence)));
    for (const auto& f : kFlawed) {
        if (s == f.text) return std::make_pair(std::string(f.category), std::string(f.error_type));
    }
    return std::nullopt;
}

std::vector<std::string> numbered_lines(std::string_view prompt) {
    const auto hash = prompt.rfind("###");
    const std::string_view block = hash == std::string_view::npos ? prompt : prompt.substr(hash);
    static const std::regex kNumbered(R"(^\s*\[(\d+)\]\s?(.*)$)");
    std::vector<std::string> out;
    for (const auto& line : split(block, '\n')) {
        std::smatch m;
        if (std::regex_match(line, m, kNumbered)) out.emplace_back(trim(m[2].str()));
    }
    return out;
}

MockBackend::Responder make_mock_responder(MockWorldOptions options) {
    return [options](const ChatRequest& req, std::uint64_t seed) -> std::string {
        switch (req.purpose) {
            case Purpose::generate: return generate(req, seed, options);
            case Purpose::evaluate: return evaluate(req, seed, options);
            case Purpose::improve: return improve(req, seed);
            case Purpose::transform: return transform(req);
            case Purpose::filter: return filter(req);
            case Purpose::extract: return extract(req);
        }
        return {};
    };
}

}  // namespace finest
