#include "finest/judge.hpp"

#include <algorithm>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "finest/parallel.hpp"

namespace finest {

Span Span::of(std::vector<int> indices) {
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    return Span{false, std::move(indices)};
}

bool Span::covers(int index) const noexcept {
    return all || std::binary_search(indices.begin(), indices.end(), index);
}

json Span::to_json() const {
    if (all) return "all";
    return indices;
}

json CoreQuestion::to_json() const {
    return {{"core", core}, {"keywords", keywords}, {"degraded", degraded}};
}

CoreQuestion CoreQuestion::from_json(const json& j) {
    CoreQuestion c;
    c.core = j.value("core", "");
    c.keywords = j.value("keywords", std::vector<std::string>{});
    c.degraded = j.value("degraded", false);
    return c;
}

// ---------------------------------------------------------------------------
// Parsers

namespace {

std::string text_of(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_null()) return {};
    return v.dump();
}

bool blank(const json& v) {
    if (v.is_null()) return true;
    if (v.is_string()) return trim(v.get_ref<const std::string&>()).empty();
    if (v.is_array() || v.is_object()) return v.empty();
    return false;
}

/// The unfilled annotation template some judges echo before their answer.
bool is_template_echo(const json& arr) {
    if (arr.empty()) return false;
    return std::all_of(arr.begin(), arr.end(), [](const json& e) {
        return blank(e.value("sentence_num", json())) && blank(e.value("error_category", json()));
    });
}

Span parse_span(const json& v, int n_sentences) {
    bool all = false;
    std::vector<int> indices;
    auto add_index = [&](long long i) {
        if (i < 1 || i > n_sentences) {
            throw Error(Errc::index_out_of_range,
                        fmt::format("sentence {} outside 1..{}", i, n_sentences));
        }
        indices.push_back(static_cast<int>(i));
    };
    auto add_token = [&](std::string_view token) {
        std::string t(trim(token));
        while (!t.empty() && (t.front() == '[' || t.front() == '(')) t.erase(t.begin());
        while (!t.empty() && (t.back() == ']' || t.back() == ')')) t.pop_back();
        t = std::string(trim(t));
        if (t.empty()) return;
        if (to_lower_ascii(t) == "all") {
            all = true;
            return;
        }
        auto n = coerce_integer(json(t));
        if (!n) throw Error(Errc::invalid_field, "sentence_num entry '" + t + "' is not an index");
        add_index(*n);
    };
    auto add_value = [&](const json& item) {
        if (item.is_string()) {
            for (const auto& part : split(item.get<std::string>(), ',')) add_token(part);
        } else if (auto n = coerce_integer(item)) {
            add_index(*n);
        } else {
            throw Error(Errc::invalid_field, "sentence_num entry " + item.dump() + " is not an index");
        }
    };

    if (v.is_array()) {
        for (const auto& item : v) add_value(item);
    } else {
        add_value(v);
    }
    if (all) return Span::everything();
    if (indices.empty()) throw Error(Errc::invalid_field, "sentence_num is empty");
    return Span::of(std::move(indices));
}

}  // namespace

std::vector<ErrorRecord> parse_error_eval(std::string_view raw, int n_sentences, Category category,
                                          const Taxonomy& taxonomy, ParseMode mode) {
    if (n_sentences < 1) throw Error(Errc::invalid_argument, "n_sentences must be at least 1");
    auto accept = [mode](const json& arr) {
        if (!std::all_of(arr.begin(), arr.end(), [](const json& e) { return e.is_object(); })) return false;
        return mode == ParseMode::strict || !is_template_echo(arr);
    };
    auto value = extract_json(raw, '[', mode, accept);
    if (!value) throw Error(Errc::no_json_found, "no JSON array of evaluation records");

    std::vector<ErrorRecord> records;
    try {
        for (const auto& item : *value) {
            ErrorRecord rec;
            if (!item.contains("sentence_num")) throw Error(Errc::missing_field, "record lacks \"sentence_num\"");
            rec.span = parse_span(item.at("sentence_num"), n_sentences);
            if (!item.contains("error_category") || blank(item.at("error_category"))) {
                throw Error(Errc::missing_field, "record lacks \"error_category\"");
            }
            if (!item.at("error_category").is_string()) {
                throw Error(Errc::invalid_field, "\"error_category\" is not a string");
            }
            rec.error_type = taxonomy.canonicalize_label(item.at("error_category").get<std::string>(), category).id;
            if (!item.contains("explanation")) throw Error(Errc::missing_field, "record lacks \"explanation\"");
            rec.explanation = text_of(item.at("explanation"));
            records.push_back(std::move(rec));
        }
    } catch (const json::exception& ex) {
        throw Error(Errc::invalid_field, std::string("malformed record: ") + ex.what());
    }
    return records;
}

std::string serialize_error_records(const std::vector<ErrorRecord>& records, const Taxonomy& taxonomy) {
    json arr = json::array();
    for (const auto& r : records) {
        arr.push_back({{"sentence_num", r.span.to_json()},
                       {"error_category", taxonomy.by_id(r.error_type).prompt_label},
                       {"explanation", r.explanation}});
    }
    return arr.dump();
}

ScoreRecord parse_score_eval(std::string_view raw, ParseMode mode) {
    auto value = extract_json(raw, '{', mode, [](const json& j) { return j.contains("score"); });
    if (!value) {
        if (extract_json(raw, '{', mode)) throw Error(Errc::missing_field, "evaluation object lacks \"score\"");
        throw Error(Errc::no_json_found, "no JSON object with a score");
    }
    ScoreRecord rec;
    const auto score = coerce_integer(value->at("score"));
    if (!score) throw Error(Errc::invalid_field, "score " + value->at("score").dump() + " is not an integer");
    if (*score < 1 || *score > 7) {
        throw Error(Errc::score_out_of_range, fmt::format("score {} outside 1..7", *score));
    }
    rec.score = static_cast<int>(*score);
    if (value->contains("feedback")) {
        rec.feedback = text_of(value->at("feedback"));
    } else if (value->contains("explanation")) {
        rec.feedback = text_of(value->at("explanation"));
    } else {
        throw Error(Errc::missing_field, "evaluation object lacks \"feedback\"");
    }
    return rec;
}

std::string serialize_score_record(const ScoreRecord& record) {
    return json{{"score", record.score}, {"feedback", record.feedback}}.dump();
}

CoreQuestion parse_core_question(std::string_view raw) {
    auto value = extract_json(raw, '{', ParseMode::lenient, [](const json& j) { return j.contains("core"); });
    if (!value) {
        if (extract_json(raw, '{', ParseMode::lenient)) throw Error(Errc::missing_field, "object lacks \"core\"");
        throw Error(Errc::no_json_found, "no JSON object with a core question");
    }
    CoreQuestion c;
    c.core = std::string(trim(text_of(value->at("core"))));
    if (c.core.empty()) throw Error(Errc::missing_field, "core question is empty");
    if (value->contains("keywords")) {
        const json& kw = value->at("keywords");
        std::vector<std::string> raw_keywords;
        if (kw.is_array()) {
            for (const auto& k : kw) raw_keywords.push_back(text_of(k));
        } else if (kw.is_string()) {
            raw_keywords = split(kw.get<std::string>(), ',');
        }
        for (const auto& k : raw_keywords) {
            std::string t(trim(k));
            if (!t.empty()) c.keywords.push_back(std::move(t));
        }
    }
    return c;
}

// ---------------------------------------------------------------------------
// Evaluation

bool Evaluation::complete() const noexcept {
    return std::all_of(categories.begin(), categories.end(), [](const CategoryResult& c) { return c.ok(); });
}

json Evaluation::to_json() const {
    json cats = json::object();
    json raw = json::object();
    for (const auto& c : categories) {
        json payload = {{"status", c.ok() ? "ok" : "failed"}, {"attempts", c.attempts}};
        if (!c.ok()) payload["error"] = c.error;
        if (scheme == Scheme::error_based) {
            json recs = json::array();
            for (const auto& r : c.records) {
                recs.push_back(
                    {{"sentence_num", r.span.to_json()}, {"error_type", r.error_type}, {"explanation", r.explanation}});
            }
            payload["records"] = recs;
        } else if (c.score) {
            payload["score"] = c.score->score;
            payload["feedback"] = c.score->feedback;
        }
        cats[std::string(to_string(c.category))] = payload;
        raw[std::string(to_string(c.category))] = c.raw;
    }
    return {{"response_id", response_id},       {"question_id", question_id},
            {"scheme", to_string(scheme)},      {"judge_model_id", judge_model_id},
            {"n_sentences", n_sentences},       {"categories", cats},
            {"raw", raw}};
}

Evaluation Evaluation::from_json(const json& j) {
    try {
        Evaluation e;
        e.response_id = j.at("response_id").get<std::string>();
        e.question_id = j.value("question_id", "");
        e.scheme = parse_scheme(j.at("scheme").get<std::string>());
        e.judge_model_id = j.value("judge_model_id", "");
        e.n_sentences = j.at("n_sentences").get<int>();
        for (Category c : kCategories) {
            const std::string key(to_string(c));
            CategoryResult& r = e.at(c);
            r.category = c;
            const json& p = j.at("categories").at(key);
            r.status = p.at("status").get<std::string>() == "ok" ? CategoryStatus::ok : CategoryStatus::failed;
            r.attempts = p.value("attempts", 0);
            r.error = p.value("error", "");
            if (p.contains("records")) {
                for (const auto& rec : p.at("records")) {
                    ErrorRecord er;
                    const json& sn = rec.at("sentence_num");
                    er.span = sn.is_string() ? Span::everything() : Span::of(sn.get<std::vector<int>>());
                    er.error_type = rec.at("error_type").get<std::string>();
                    er.explanation = rec.value("explanation", "");
                    r.records.push_back(std::move(er));
                }
            }
            if (p.contains("score")) r.score = ScoreRecord{p.at("score").get<int>(), p.value("feedback", "")};
            if (j.contains("raw") && j.at("raw").contains(key)) {
                r.raw = j.at("raw").at(key).get<std::vector<std::string>>();
            }
        }
        return e;
    } catch (const json::exception& ex) {
        throw Error(Errc::invalid_field, std::string("malformed evaluation record: ") + ex.what());
    }
}

// ---------------------------------------------------------------------------
// Judge

Judge::Judge(Gateway& gateway, AssetStore assets, JudgeConfig config, const Taxonomy& taxonomy)
    : gateway_(gateway), assets_(std::move(assets)), config_(std::move(config)), taxonomy_(taxonomy) {
    if (config_.extract_model_id.empty()) config_.extract_model_id = config_.model_id;
}

std::string render_eval_query(const AssetStore& assets, std::string_view question, const SentenceIndexedText& body,
                              const CoreQuestion* core) {
    std::string core_block;
    if (core != nullptr) {
        std::vector<std::string> quoted;
        for (const auto& k : core->keywords) quoted.push_back("\"" + k + "\"");
        core_block = fmt::format("Core question: \"{}\"\nKeywords: {}\n", core->core,
                                 quoted.empty() ? std::string("(none)") : join(quoted, ", "));
    }
    return render_template(assets.load("prompts/evaluation_query.txt"),
                           {{"question", std::string(question)}, {"core_block", core_block}, {"response", body.numbered()}});
}

std::string Judge::fewshot_block(Category category, Scheme scheme) const {
    const std::string rel = fmt::format("fewshots/{}_{}.json", to_string(category), to_string(scheme));
    const json shots = json::parse(assets_.load(rel), nullptr, false);
    if (shots.is_discarded() || !shots.is_array()) {
        throw Error(Errc::missing_template, rel + " is not a JSON array of exemplars");
    }
    std::string out;
    for (const auto& shot : shots) {
        std::optional<CoreQuestion> core;
        if (shot.contains("core")) core = CoreQuestion{shot.at("core").get<std::string>(),
                                                       shot.value("keywords", std::vector<std::string>{}), false};
        const SentenceIndexedText body = segment_sentences(shot.at("response").get<std::string>());
        out += render_eval_query(assets_, shot.at("question").get<std::string>(), body, core ? &*core : nullptr);
        out += " " + shot.at("evaluation").dump() + "\n\n";
    }
    return out;
}

ChatRequest Judge::build_eval_prompt(const Question& question, const Response& response,
                                     const SentenceIndexedText& sentences, Category category, Scheme scheme,
                                     const CoreQuestion* core) const {
    if (category == Category::appropriateness && core == nullptr) {
        throw Error(Errc::missing_core_question, "appropriateness prompt for " + response.id + " needs a core question");
    }
    const CoreQuestion* used_core = category == Category::appropriateness ? core : nullptr;
    std::string prompt = taxonomy_.render_rubric(category, scheme, assets_);
    if (!prompt.empty() && prompt.back() != '\n') prompt.push_back('\n');
    prompt += "\n";
    prompt += fewshot_block(category, scheme);
    prompt += render_eval_query(assets_, question.text, sentences, used_core);

    ChatRequest req = ChatRequest::make(config_.model_id, Purpose::evaluate, {{Role::user, prompt}}, config_.decoding);
    req.tags["question_id"] = question.id;
    req.tags["response_id"] = response.id;
    req.tags["category"] = std::string(to_string(category));
    req.tags["scheme"] = std::string(to_string(scheme));
    return req;
}

CoreQuestion Judge::extract_core_question(const Question& question) const {
    if (trim(question.text).empty()) throw Error(Errc::invalid_argument, "cannot extract from an empty question");
    try {
        const std::string prompt = render_template(assets_.load("prompts/extract_core.txt"), {{"question", question.text}});
        ChatRequest req =
            ChatRequest::make(config_.extract_model_id, Purpose::extract, {{Role::user, prompt}}, config_.decoding);
        req.tags["question_id"] = question.id;
        return parse_core_question(gateway_.complete(req).text);
    } catch (const Error& ex) {
        if (ex.code() == Errc::missing_template) throw;
        spdlog::warn("core question extraction failed for {}: {}", question.id, ex.what());
        return CoreQuestion{question.text, {}, true};
    }
}

namespace {

bool retryable_parse_error(Errc code) {
    switch (code) {
        case Errc::no_json_found:
        case Errc::index_out_of_range:
        case Errc::unknown_label:
        case Errc::missing_field:
        case Errc::invalid_field:
        case Errc::score_out_of_range:
        case Errc::empty_completion: return true;
        default: return false;
    }
}

}  // namespace

CategoryResult Judge::evaluate_category(const Question& question, const Response& response,
                                        const SentenceIndexedText& sentences, Category category, Scheme scheme,
                                        const CoreQuestion* core) const {
    CategoryResult result;
    result.category = category;
    ChatRequest req = build_eval_prompt(question, response, sentences, category, scheme, core);
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        req.sample_index = attempt;
        result.attempts = attempt + 1;
        try {
            const ChatResponse resp = gateway_.complete(req);
            result.raw.push_back(resp.text);
            if (scheme == Scheme::error_based) {
                result.records = parse_error_eval(resp.text, sentences.size(), category, taxonomy_, config_.mode);
            } else {
                result.score = parse_score_eval(resp.text, config_.mode);
            }
            result.status = CategoryStatus::ok;
            result.error.clear();
            return result;
        } catch (const Error& ex) {
            result.error = ex.what();
            if (!retryable_parse_error(ex.code())) break;
            spdlog::debug("{} {} attempt {} rejected: {}", response.id, to_string(category), attempt + 1, ex.what());
        }
    }
    result.status = CategoryStatus::failed;
    result.records.clear();
    result.score.reset();
    result.error = fmt::format("{}: {}: {}", to_string(Errc::category_evaluation_failed), to_string(category), result.error);
    spdlog::warn("{} {}", response.id, result.error);
    return result;
}

Evaluation Judge::evaluate_response(const Question& question, const Response& response, Scheme scheme,
                                    const CoreQuestion* core) const {
    if (trim(response.text).empty()) throw Error(Errc::invalid_argument, "response " + response.id + " is empty");
    const SentenceIndexedText sentences = segment_sentences(response.text);

    std::optional<CoreQuestion> extracted;
    if (core == nullptr) {
        extracted = extract_core_question(question);
        core = &*extracted;
    }

    Evaluation eval;
    eval.response_id = response.id;
    eval.question_id = question.id;
    eval.scheme = scheme;
    eval.judge_model_id = config_.model_id;
    eval.n_sentences = sentences.size();
    parallel_for(kCategories.size(), static_cast<int>(kCategories.size()), [&](std::size_t i) {
        eval.categories[i] = evaluate_category(question, response, sentences, kCategories[i], scheme, core);
    });
    return eval;
}

}  // namespace finest
