#include "finest/corpus.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "finest/parallel.hpp"
#include "finest/text.hpp"

namespace finest {

std::string_view to_string(Source s) noexcept {
    switch (s) {
        case Source::square_train: return "square_train";
        case Source::square_valid: return "square_valid";
        case Source::kold: return "kold";
        case Source::ibm: return "ibm";
    }
    return "square_train";
}

Source parse_source(std::string_view text) {
    const std::string t = normalize_label(text);
    for (Source s : kSources) {
        if (t == to_string(s)) return s;
    }
    throw Error(Errc::invalid_argument, "unknown source '" + std::string(text) + "'");
}

std::string_view to_string(Stance s) noexcept {
    switch (s) {
        case Stance::agree: return "agree";
        case Stance::disagree: return "disagree";
        case Stance::default_stance: return "default";
    }
    return "default";
}

Stance parse_stance(std::string_view text) {
    const std::string t = to_lower_ascii(trim(text));
    for (Stance s : kStances) {
        if (t == to_string(s)) return s;
    }
    throw Error(Errc::invalid_argument, "unknown stance '" + std::string(text) + "'");
}

bool CriteriaVerdict::pass() const noexcept {
    return std::all_of(criteria.begin(), criteria.end(), [](bool b) { return b; });
}

bool Question::in_final_corpus() const noexcept {
    return filter_trace.dropped_reason.empty() && filter_trace.controversy && filter_trace.controversy->controversial &&
           filter_trace.criteria && filter_trace.criteria->pass();
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json verdict_to_json(const FilterVerdict& v) {
    return {{"controversial", v.controversial},
            {"unsatisfied_category", std::vector<std::string>(v.unsatisfied_category.begin(), v.unsatisfied_category.end())},
            {"reasoning", v.reasoning}};
}

json criteria_to_json(const CriteriaVerdict& v) {
    json j = json::object();
    for (std::size_t i = 0; i < v.criteria.size(); ++i) j["C" + std::to_string(i + 1)] = v.criteria[i];
    j["reasoning"] = v.reasoning;
    return j;
}

}  // namespace

json to_json(const Question& q) {
    json trace = json::object();
    trace["controversy"] = q.filter_trace.controversy ? verdict_to_json(*q.filter_trace.controversy) : json(nullptr);
    trace["criteria"] = q.filter_trace.criteria ? criteria_to_json(*q.filter_trace.criteria) : json(nullptr);
    trace["dropped_reason"] = q.filter_trace.dropped_reason;
    return {{"id", q.id}, {"text", q.text}, {"source", to_string(q.source)}, {"origin", q.origin}, {"filter_trace", trace}};
}

Question question_from_json(const json& j) {
    try {
        Question q;
        q.id = j.at("id").get<std::string>();
        q.text = j.at("text").get<std::string>();
        q.source = parse_source(j.at("source").get<std::string>());
        q.origin = j.value("origin", json::object());
        if (j.contains("filter_trace")) {
            const json& t = j.at("filter_trace");
            if (t.contains("controversy") && t["controversy"].is_object()) {
                FilterVerdict v;
                v.controversial = t["controversy"].value("controversial", false);
                for (const auto& c : t["controversy"].value("unsatisfied_category", json::array())) {
                    v.unsatisfied_category.insert(c.get<std::string>());
                }
                v.reasoning = t["controversy"].value("reasoning", "");
                q.filter_trace.controversy = v;
            }
            if (t.contains("criteria") && t["criteria"].is_object()) {
                CriteriaVerdict v;
                for (std::size_t i = 0; i < v.criteria.size(); ++i) {
                    v.criteria[i] = t["criteria"].value("C" + std::to_string(i + 1), false);
                }
                v.reasoning = t["criteria"].value("reasoning", "");
                q.filter_trace.criteria = v;
            }
            q.filter_trace.dropped_reason = t.value("dropped_reason", "");
        }
        return q;
    } catch (const json::exception& ex) {
        throw Error(Errc::invalid_field, std::string("malformed question record: ") + ex.what());
    }
}

json to_json(const Response& r) {
    return {{"id", r.id},
            {"question_id", r.question_id},
            {"model_id", r.model_id},
            {"stance", to_string(r.stance)},
            {"text", r.text},
            {"sentence_count", r.sentence_count}};
}

Response response_from_json(const json& j) {
    try {
        Response r;
        r.id = j.at("id").get<std::string>();
        r.question_id = j.at("question_id").get<std::string>();
        r.model_id = j.at("model_id").get<std::string>();
        r.stance = parse_stance(j.at("stance").get<std::string>());
        r.text = j.at("text").get<std::string>();
        r.sentence_count = j.value("sentence_count", 0);
        if (r.sentence_count <= 0) r.sentence_count = segment_sentences(r.text).size();
        return r;
    } catch (const json::exception& ex) {
        throw Error(Errc::invalid_field, std::string("malformed response record: ") + ex.what());
    }
}

// ---------------------------------------------------------------------------
// Source ingestion

namespace {

std::map<std::string, std::string> default_field_map(Source s) {
    switch (s) {
        case Source::kold: return {{"title", "title"}, {"comment", "comment"}};
        case Source::ibm: return {{"argument", "argument"}};
        default: return {{"question", "question"}};
    }
}

std::string field_as_text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_null()) return {};
    return v.dump();
}

}  // namespace

SourceSpec SourceSpec::from_json(const json& j, const std::filesystem::path& base_dir) {
    try {
        SourceSpec spec;
        spec.source = parse_source(j.at("source").get<std::string>());
        std::filesystem::path p = j.at("path").get<std::string>();
        spec.path = (p.is_relative() && !base_dir.empty()) ? base_dir / p : p;
        const std::string ext = to_lower_ascii(spec.path.extension().string());
        spec.format = j.value("format", ext == ".csv" ? "csv" : ext == ".tsv" ? "tsv" : "jsonl");
        if (spec.format != "jsonl" && spec.format != "csv" && spec.format != "tsv") {
            throw Error(Errc::config_error, "unsupported source format '" + spec.format + "'");
        }
        spec.id_field = j.value("id_field", "");
        spec.field_map = default_field_map(spec.source);
        if (j.contains("fields")) {
            for (const auto& [canonical, column] : j.at("fields").items()) {
                spec.field_map[canonical] = column.get<std::string>();
            }
        }
        return spec;
    } catch (const json::exception& ex) {
        throw Error(Errc::config_error, std::string("malformed source mapping: ") + ex.what());
    }
}

std::vector<std::vector<std::string>> parse_delimited(std::string_view text, char delimiter) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && field.empty()) {
            quoted = true;
            any = true;
        } else if (c == delimiter) {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            field.clear();
            row.clear();
            any = false;
        } else {
            field.push_back(c);
            any = true;
        }
    }
    if (quoted) throw Error(Errc::invalid_field, "unterminated quoted field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<SourceRecord> load_source(const SourceSpec& spec) {
    std::vector<json> objects;
    if (spec.format == "jsonl") {
        objects = read_jsonl(spec.path);
    } else {
        const auto rows = parse_delimited(read_text_file(spec.path), spec.format == "csv" ? ',' : '\t');
        if (rows.empty()) return {};
        const auto& header = rows.front();
        for (std::size_t r = 1; r < rows.size(); ++r) {
            json obj = json::object();
            for (std::size_t c = 0; c < header.size() && c < rows[r].size(); ++c) obj[header[c]] = rows[r][c];
            objects.push_back(std::move(obj));
        }
    }

    std::vector<SourceRecord> records;
    records.reserve(objects.size());
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const json& obj = objects[i];
        SourceRecord rec;
        rec.source = spec.source;
        rec.id = (!spec.id_field.empty() && obj.contains(spec.id_field)) ? field_as_text(obj.at(spec.id_field))
                                                                         : std::to_string(i + 1);
        for (const auto& [canonical, column] : spec.field_map) {
            if (!obj.contains(column)) {
                throw Error(Errc::missing_field, fmt::format("{} row {}: column '{}' not found", spec.path.string(),
                                                             i + 1, column));
            }
            rec.fields[canonical] = field_as_text(obj.at(column));
        }
        records.push_back(std::move(rec));
    }
    return records;
}

// ---------------------------------------------------------------------------
// Structured output parsing

std::string normalize_question_text(std::string_view text) {
    std::string q(trim(text));
    if (q.empty()) return q;
    if (q.back() == '?') return q;
    // Fullwidth question mark (U+FF1F) counts too.
    if (q.size() >= 3 && q.compare(q.size() - 3, 3, "\xEF\xBC\x9F") == 0) return q;
    while (!q.empty() && (q.back() == '.' || q.back() == '!')) q.pop_back();
    q.push_back('?');
    return q;
}

std::string parse_transform_output(std::string_view raw) {
    auto accept = [](const json& j) {
        return j.is_object() && j.contains("question") && j["question"].is_string() &&
               !trim(j["question"].get<std::string>()).empty();
    };
    auto value = extract_json(raw, '{', ParseMode::lenient, accept);
    if (!value) throw Error(Errc::transform_parse_failure, "no JSON object with a non-empty \"question\" field");
    return normalize_question_text((*value)["question"].get<std::string>());
}

namespace {

std::set<std::string> parse_unsatisfied(const json& v) {
    std::set<std::string> out;
    auto add = [&](const std::string& item) {
        const std::string t(trim(item));
        if (t.empty()) return;
        if (t != "1" && t != "2") {
            throw Error(Errc::filter_parse_failure, "unsatisfied_category value '" + t + "' is not \"1\" or \"2\"");
        }
        out.insert(t);
    };
    auto add_value = [&](const json& item) {
        if (item.is_string()) {
            for (const auto& part : split(item.get<std::string>(), ',')) add(part);
        } else if (auto n = coerce_integer(item)) {
            add(std::to_string(*n));
        } else if (!item.is_null()) {
            throw Error(Errc::filter_parse_failure, "unsatisfied_category has non-scalar entry");
        }
    };
    if (v.is_array()) {
        for (const auto& item : v) add_value(item);
    } else {
        add_value(v);
    }
    return out;
}

}  // namespace

FilterVerdict parse_filter_verdict(std::string_view raw) {
    auto accept = [](const json& j) { return j.is_object() && j.contains("controversial"); };
    auto value = extract_json(raw, '{', ParseMode::lenient, accept);
    if (!value) throw Error(Errc::filter_parse_failure, "no JSON object with a \"controversial\" field");
    FilterVerdict v;
    auto flag = coerce_bool((*value)["controversial"]);
    if (!flag) throw Error(Errc::filter_parse_failure, "\"controversial\" is not a boolean");
    v.controversial = *flag;
    if (value->contains("unsatisfied_category")) v.unsatisfied_category = parse_unsatisfied((*value)["unsatisfied_category"]);
    if (value->contains("reasoning")) v.reasoning = field_as_text((*value)["reasoning"]);
    if (!v.controversial && v.unsatisfied_category.empty()) {
        throw Error(Errc::filter_parse_failure, "non-controversial verdict names no unsatisfied condition");
    }
    return v;
}

CriteriaVerdict parse_criteria_verdict(std::string_view raw) {
    auto find_key = [](const json& j, int i) -> const json* {
        for (const std::string key : {"C" + std::to_string(i), "c" + std::to_string(i)}) {
            if (j.contains(key)) return &j[key];
        }
        return nullptr;
    };
    auto accept = [&](const json& j) { return j.is_object() && find_key(j, 1) != nullptr; };
    auto value = extract_json(raw, '{', ParseMode::lenient, accept);
    if (!value) throw Error(Errc::filter_parse_failure, "no JSON object with criteria C1..C6");
    CriteriaVerdict v;
    for (int i = 1; i <= 6; ++i) {
        const json* field = find_key(*value, i);
        if (field == nullptr) throw Error(Errc::filter_parse_failure, fmt::format("criterion C{} missing", i));
        auto flag = coerce_bool(*field);
        if (!flag) throw Error(Errc::filter_parse_failure, fmt::format("criterion C{} is not a boolean", i));
        v.criteria[static_cast<std::size_t>(i - 1)] = *flag;
    }
    if (value->contains("reasoning")) v.reasoning = field_as_text((*value)["reasoning"]);
    return v;
}

// ---------------------------------------------------------------------------
// CorpusBuilder

CorpusBuilder::CorpusBuilder(Gateway& gateway, AssetStore assets, CorpusOptions options)
    : gateway_(gateway), assets_(std::move(assets)), options_(std::move(options)) {}

namespace {

std::string origin_field(const SourceRecord& record, const std::string& key) {
    auto it = record.fields.find(key);
    if (it == record.fields.end()) {
        throw Error(Errc::missing_field, fmt::format("{} record {} has no '{}' field", to_string(record.source),
                                                     record.id, key));
    }
    return it->second;
}

}  // namespace

Question CorpusBuilder::transform_to_question(const SourceRecord& record, int sample_index) const {
    Question q;
    q.id = std::string(to_string(record.source)) + "-" + record.id;
    q.source = record.source;
    for (const auto& [k, v] : record.fields) q.origin[k] = v;

    if (record.source == Source::square_train || record.source == Source::square_valid) {
        q.text = std::string(trim(origin_field(record, "question")));
        return q;
    }

    std::string prompt;
    if (record.source == Source::kold) {
        prompt = render_template(assets_.load("prompts/transform_kold.txt"),
                                 {{"title", json(origin_field(record, "title")).dump()},
                                  {"comment", json(origin_field(record, "comment")).dump()}});
    } else {
        prompt = render_template(assets_.load("prompts/transform_ibm.txt"),
                                 {{"argument", json(origin_field(record, "argument")).dump()}});
    }
    ChatRequest req = ChatRequest::make(options_.transform_model, Purpose::transform, {{Role::user, prompt}},
                                        options_.decoding);
    req.sample_index = sample_index;
    req.tags["question_id"] = q.id;
    req.tags["source"] = std::string(to_string(record.source));
    q.text = parse_transform_output(gateway_.complete(req).text);
    return q;
}

FilterVerdict CorpusBuilder::filter_controversial(const Question& q, int sample_index) const {
    if (trim(q.text).empty()) throw Error(Errc::invalid_argument, "cannot filter an empty question");
    const std::string prompt =
        render_template(assets_.load("prompts/filter_controversy.txt"), {{"question", q.text}});
    ChatRequest req =
        ChatRequest::make(options_.filter_model, Purpose::filter, {{Role::user, prompt}}, options_.decoding);
    req.sample_index = sample_index;
    req.tags["question_id"] = q.id;
    req.tags["stage"] = "controversy";
    return parse_filter_verdict(gateway_.complete(req).text);
}

CriteriaVerdict CorpusBuilder::filter_criteria(const Question& q, int sample_index) const {
    if (trim(q.text).empty()) throw Error(Errc::invalid_argument, "cannot filter an empty question");
    const std::string prompt = render_template(assets_.load("prompts/filter_criteria.txt"),
                                               {{"question", json(q.text).dump()}});
    ChatRequest req =
        ChatRequest::make(options_.filter_model, Purpose::filter, {{Role::user, prompt}}, options_.decoding);
    req.sample_index = sample_index;
    req.tags["question_id"] = q.id;
    req.tags["stage"] = "criteria";
    return parse_criteria_verdict(gateway_.complete(req).text);
}

namespace {

/// Calls `step(sample_index)` until it stops throwing `retry_on`, giving up
/// after `retries` extra attempts.
template <typename Step>
auto with_retries(int retries, Errc retry_on, Step&& step) -> decltype(step(0)) {
    for (int attempt = 0;; ++attempt) {
        try {
            return step(attempt);
        } catch (const Error& ex) {
            if (ex.code() != retry_on || attempt >= retries) throw;
            spdlog::debug("retrying after {}", ex.what());
        }
    }
}

}  // namespace

CorpusBuildResult CorpusBuilder::build(const std::vector<SourceRecord>& records) const {
    std::vector<Question> processed(records.size());
    parallel_for(records.size(), gateway_.config().max_in_flight, [&](std::size_t i) {
        const SourceRecord& rec = records[i];
        Question& q = processed[i];
        q.id = std::string(to_string(rec.source)) + "-" + rec.id;
        q.source = rec.source;
        for (const auto& [k, v] : rec.fields) q.origin[k] = v;
        try {
            q = with_retries(options_.parse_retries, Errc::transform_parse_failure,
                             [&](int s) { return transform_to_question(rec, s); });
            if (trim(q.text).empty()) {
                q.filter_trace.dropped_reason = "empty question text";
                return;
            }
            q.filter_trace.controversy = with_retries(options_.parse_retries, Errc::filter_parse_failure,
                                                      [&](int s) { return filter_controversial(q, s); });
            if (!q.filter_trace.controversy->controversial) {
                q.filter_trace.dropped_reason = "not controversial";
                return;
            }
            q.filter_trace.criteria = with_retries(options_.parse_retries, Errc::filter_parse_failure,
                                                   [&](int s) { return filter_criteria(q, s); });
            if (!q.filter_trace.criteria->pass()) {
                std::vector<std::string> failed;
                for (std::size_t c = 0; c < 6; ++c) {
                    if (!q.filter_trace.criteria->criteria[c]) failed.push_back("C" + std::to_string(c + 1));
                }
                q.filter_trace.dropped_reason = "criteria not met: " + join(failed, ",");
            }
        } catch (const Error& ex) {
            q.filter_trace.dropped_reason = ex.what();
        }
    });

    CorpusBuildResult result;
    std::unordered_set<std::string> seen_text;
    std::unordered_set<std::string> seen_id;
    for (auto& q : processed) {
        if (q.filter_trace.dropped_reason.empty()) {
            if (!seen_text.insert(q.text).second) {
                q.filter_trace.dropped_reason = "duplicate question text";
            } else if (!seen_id.insert(q.id).second) {
                q.filter_trace.dropped_reason = "duplicate question id";
            }
        }
        if (q.filter_trace.dropped_reason.empty()) {
            result.questions.push_back(std::move(q));
        } else {
            spdlog::info("dropped {}: {}", q.id, q.filter_trace.dropped_reason);
            result.dropped.push_back(std::move(q));
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Response generation

std::string response_id(const std::string& question_id, const std::string& model_id, Stance stance) {
    return question_id + ":" + model_id + ":" + std::string(to_string(stance));
}

ChatRequest build_response_request(const Question& q, const std::string& model_id, Stance stance,
                                   const AssetStore& assets, const DecodingTable& decoding) {
    std::string prompt;
    switch (stance) {
        case Stance::default_stance: prompt = q.text; break;
        case Stance::agree:
            prompt = std::string(trim(render_template(assets.load("prompts/stance_agree.txt"), {{"question", q.text}})));
            break;
        case Stance::disagree:
            prompt =
                std::string(trim(render_template(assets.load("prompts/stance_disagree.txt"), {{"question", q.text}})));
            break;
    }
    ChatRequest req = ChatRequest::make(model_id, Purpose::generate, {{Role::user, prompt}}, decoding);
    req.tags["question_id"] = q.id;
    req.tags["stance"] = std::string(to_string(stance));
    return req;
}

ResponseBatch generate_responses(Gateway& gateway, const AssetStore& assets, const Question& q,
                                 const std::vector<std::string>& model_ids, const std::vector<Stance>& stances,
                                 const DecodingTable& decoding) {
    if (model_ids.empty() || stances.empty()) {
        throw Error(Errc::invalid_argument, "generate_responses needs at least one model and one stance");
    }
    if (std::set<std::string>(model_ids.begin(), model_ids.end()).size() != model_ids.size()) {
        throw Error(Errc::duplicate_response, "model list for " + q.id + " repeats a model");
    }
    if (std::set<Stance>(stances.begin(), stances.end()).size() != stances.size()) {
        throw Error(Errc::duplicate_response, "stance list for " + q.id + " repeats a stance");
    }

    struct Slot {
        std::optional<Response> response;
        std::optional<MissingResponse> missing;
    };
    const std::size_t n = model_ids.size() * stances.size();
    std::vector<Slot> slots(n);
    parallel_for(n, gateway.config().max_in_flight, [&](std::size_t i) {
        const std::string& model = model_ids[i / stances.size()];
        const Stance stance = stances[i % stances.size()];
        try {
            const ChatResponse resp = gateway.complete(build_response_request(q, model, stance, assets, decoding));
            Response r;
            r.id = response_id(q.id, model, stance);
            r.question_id = q.id;
            r.model_id = model;
            r.stance = stance;
            r.text = resp.text;
            r.sentence_count = segment_sentences(r.text).size();
            slots[i].response = std::move(r);
        } catch (const Error& ex) {
            spdlog::warn("no response for {} / {} / {}: {}", q.id, model, to_string(stance), ex.what());
            slots[i].missing = MissingResponse{q.id, model, stance, ex.what()};
        }
    });

    ResponseBatch batch;
    for (auto& s : slots) {
        if (s.response) batch.responses.push_back(std::move(*s.response));
        if (s.missing) batch.missing.push_back(std::move(*s.missing));
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Statistics

CorpusStats corpus_stats(const std::vector<Question>& questions, const std::vector<Response>& responses,
                         std::optional<std::size_t> per_question) {
    CorpusStats s;
    std::map<std::string, Source> source_of;
    for (const auto& q : questions) {
        ++s.questions_per_source[q.source];
        source_of[q.id] = q.source;
    }
    std::set<std::pair<std::string, Stance>> pairs;
    for (const auto& r : responses) {
        auto it = source_of.find(r.question_id);
        if (it != source_of.end()) ++s.responses_per_source[it->second];
        pairs.emplace(r.model_id, r.stance);
    }
    s.questions = questions.size();
    s.responses = responses.size();
    s.per_question = per_question.value_or(pairs.size());
    s.expected_responses = s.questions * s.per_question;
    s.deficit = s.expected_responses > s.responses ? s.expected_responses - s.responses : 0;
    s.product_check = s.responses == s.expected_responses;
    return s;
}

std::string CorpusStats::to_text() const {
    std::ostringstream out;
    out << fmt::format("{:<14}{:>12}{:>12}\n", "source", "questions", "responses");
    for (Source src : kSources) {
        auto q = questions_per_source.count(src) ? questions_per_source.at(src) : 0;
        auto r = responses_per_source.count(src) ? responses_per_source.at(src) : 0;
        out << fmt::format("{:<14}{:>12}{:>12}\n", to_string(src), q, r);
    }
    out << fmt::format("{:<14}{:>12}{:>12}\n", "total", questions, responses);
    out << fmt::format("expected {} x {} = {}; deficit {}; check {}\n", questions, per_question, expected_responses,
                       deficit, product_check ? "passes" : "fails");
    return out.str();
}

json CorpusStats::to_json() const {
    json by_source = json::object();
    for (Source src : kSources) {
        by_source[std::string(to_string(src))] = {
            {"questions", questions_per_source.count(src) ? questions_per_source.at(src) : 0},
            {"responses", responses_per_source.count(src) ? responses_per_source.at(src) : 0}};
    }
    return {{"by_source", by_source},       {"questions", questions},
            {"responses", responses},       {"per_question", per_question},
            {"expected_responses", expected_responses}, {"deficit", deficit},
            {"product_check", product_check}};
}

}  // namespace finest
