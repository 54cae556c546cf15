#include "finest/refine.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "finest/parallel.hpp"

namespace finest {

std::string_view to_string(StrategyId s) noexcept {
    switch (s) {
        case StrategyId::self: return "self";
        case StrategyId::taxo_only: return "taxo_only";
        case StrategyId::finest_error: return "finest_error";
        case StrategyId::finest_score: return "finest_score";
    }
    return "self";
}

StrategyId parse_strategy(std::string_view text) {
    const std::string t = normalize_label(text);
    if (t == "self") return StrategyId::self;
    if (t == "taxo" || t == "taxo_only" || t == "taxoonly") return StrategyId::taxo_only;
    if (t == "error" || t == "finest_error") return StrategyId::finest_error;
    if (t == "score" || t == "finest_score") return StrategyId::finest_score;
    throw Error(Errc::invalid_argument, "unknown strategy '" + std::string(text) + "'");
}

std::string method_label(StrategyId s) {
    switch (s) {
        case StrategyId::self: return "Improved_Self";
        case StrategyId::taxo_only: return "Improved_FINEST-TaxoOnly";
        case StrategyId::finest_error: return "Improved_FINEST-Error";
        case StrategyId::finest_score: return "Improved_FINEST-Score";
    }
    return "Improved_Self";
}

bool Strategy::needs(Scheme s) const noexcept {
    return std::find(feedback_schemes.begin(), feedback_schemes.end(), s) != feedback_schemes.end();
}

Strategy StrategyMatrix::get(StrategyId id) const {
    switch (id) {
        case StrategyId::self: return {id, false, {}};
        case StrategyId::taxo_only: return {id, true, {}};
        case StrategyId::finest_error:
            if (appendix_table) return {id, false, {Scheme::error_based, Scheme::score_based}};
            return {id, true, {Scheme::error_based}};
        case StrategyId::finest_score: return {id, true, {Scheme::score_based}};
    }
    return {id, false, {}};
}

json ImprovedResponse::to_json() const {
    json evals = json::array();
    for (const auto& e : evaluation_after) evals.push_back(e.to_json());
    return {{"id", id},
            {"source_response_id", source_response_id},
            {"question_id", question_id},
            {"strategy", to_string(strategy)},
            {"text", text},
            {"provenance", to_string(provenance)},
            {"round", round},
            {"evaluation_after", evals}};
}

ImprovedResponse ImprovedResponse::from_json(const json& j) {
    try {
        ImprovedResponse r;
        r.id = j.at("id").get<std::string>();
        r.source_response_id = j.at("source_response_id").get<std::string>();
        r.question_id = j.value("question_id", "");
        r.strategy = parse_strategy(j.at("strategy").get<std::string>());
        r.text = j.at("text").get<std::string>();
        const std::string prov = j.value("provenance", "live");
        r.provenance = prov == "cache" ? Provenance::cache : prov == "mock" ? Provenance::mock : Provenance::live;
        r.round = j.value("round", 1);
        for (const auto& e : j.value("evaluation_after", json::array())) r.evaluation_after.push_back(Evaluation::from_json(e));
        return r;
    } catch (const json::exception& ex) {
        throw Error(Errc::invalid_field, std::string("malformed improved response: ") + ex.what());
    }
}

// ---------------------------------------------------------------------------
// Feedback rendering

namespace {

std::string span_text(const Span& span) {
    if (span.all) return "all";
    std::vector<std::string> parts;
    for (int i : span.indices) parts.push_back(std::to_string(i));
    return join(parts, ", ");
}

}  // namespace

std::string render_error_feedback(const Evaluation& eval, const Taxonomy& taxonomy) {
    std::string out;
    for (const auto& c : eval.categories) {
        out += std::string(display_name(c.category)) + "\n";
        if (!c.ok()) {
            out += "- (evaluation unavailable)\n";
        } else if (c.records.empty()) {
            out += "- No errors found.\n";
        } else {
            for (const auto& r : c.records) {
                out += fmt::format("- Sentence(s) {}: {} — {}\n", span_text(r.span), taxonomy.by_id(r.error_type).name,
                                   r.explanation);
            }
        }
    }
    return out;
}

std::string render_score_feedback(const Evaluation& eval) {
    std::string out;
    for (const auto& c : eval.categories) {
        if (!c.ok() || !c.score) {
            out += fmt::format("{}: (evaluation unavailable)\n", display_name(c.category));
            continue;
        }
        out += fmt::format("{}: {}/7\n{}\n", display_name(c.category), c.score->score, c.score->feedback);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Refiner

Refiner::Refiner(Gateway& gateway, AssetStore assets, RefineConfig config, const Taxonomy& taxonomy)
    : gateway_(gateway), assets_(std::move(assets)), config_(std::move(config)), taxonomy_(taxonomy) {}

ChatRequest Refiner::build_improvement_prompt(const Question& question, const Response& response, StrategyId id,
                                              const std::vector<const Evaluation*>& feedback) const {
    const Strategy strategy = config_.matrix.get(id);
    std::vector<const Evaluation*> given;
    for (const Evaluation* e : feedback) {
        if (e != nullptr) given.push_back(e);
    }

    if (strategy.feedback_schemes.empty() && !given.empty()) {
        throw Error(Errc::feedback_not_allowed, fmt::format("strategy {} takes no feedback", to_string(id)));
    }
    std::map<Scheme, const Evaluation*> by_scheme;
    for (const Evaluation* e : given) {
        if (!strategy.needs(e->scheme)) {
            throw Error(Errc::feedback_scheme_mismatch,
                        fmt::format("strategy {} does not take {} feedback", to_string(id), to_string(e->scheme)));
        }
        if (!e->response_id.empty() && e->response_id != response.id) {
            throw Error(Errc::invalid_argument,
                        "feedback for " + e->response_id + " supplied with response " + response.id);
        }
        by_scheme[e->scheme] = e;
    }
    for (Scheme s : strategy.feedback_schemes) {
        if (!by_scheme.count(s)) {
            throw Error(Errc::missing_feedback,
                        fmt::format("strategy {} needs {} feedback", to_string(id), to_string(s)));
        }
    }

    std::string taxonomy_block;
    if (strategy.include_taxonomy) {
        taxonomy_block = render_template(assets_.load("prompts/improve_taxonomy.txt"), {{"taxonomy", taxonomy_.describe()}});
    }
    std::string feedback_block;
    for (Scheme s : strategy.feedback_schemes) {
        if (s == Scheme::error_based) {
            feedback_block += render_template(assets_.load("prompts/improve_feedback_error.txt"),
                                              {{"feedback", render_error_feedback(*by_scheme.at(s), taxonomy_)}});
        } else {
            feedback_block += render_template(assets_.load("prompts/improve_feedback_score.txt"),
                                              {{"feedback", render_score_feedback(*by_scheme.at(s))}});
        }
    }

    const std::string prompt = render_template(assets_.load("prompts/improve_base.txt"),
                                               {{"question", question.text},
                                                {"response", segment_sentences(response.text).numbered()},
                                                {"taxonomy_block", taxonomy_block},
                                                {"feedback_block", feedback_block}});
    ChatRequest req = ChatRequest::make(config_.model_id, Purpose::improve, {{Role::user, prompt}}, config_.decoding);
    req.tags["question_id"] = question.id;
    req.tags["response_id"] = response.id;
    req.tags["strategy"] = std::string(to_string(id));
    return req;
}

ImprovedResponse Refiner::improve(const Question& question, const Response& response, StrategyId strategy,
                                  const std::vector<const Evaluation*>& feedback) const {
    const ChatResponse resp = gateway_.complete(build_improvement_prompt(question, response, strategy, feedback));
    ImprovedResponse out;
    out.id = response.id + ":" + std::string(to_string(strategy));
    out.source_response_id = response.id;
    out.question_id = question.id;
    out.strategy = strategy;
    out.text = resp.text;
    out.provenance = resp.provenance;
    return out;
}

// ---------------------------------------------------------------------------
// Comparison loop

ComparisonResult run_comparison(const std::vector<ComparisonItem>& items, const std::vector<StrategyId>& strategies,
                                const Refiner& refiner, const Judge& judge, AggregateOptions options) {
    if (items.empty()) throw Error(Errc::empty_input, "run_comparison needs at least one test-set response");
    if (std::set<StrategyId>(strategies.begin(), strategies.end()).size() != strategies.size()) {
        throw Error(Errc::invalid_argument, "strategy list repeats a strategy");
    }

    std::vector<Evaluation> original_evals;
    for (const auto& it : items) {
        original_evals.push_back(it.error_eval);
        original_evals.push_back(it.score_eval);
    }
    const AggregateMetrics original = aggregate(original_evals, options);

    // Core questions are shared by every re-evaluation of the same question.
    std::map<std::string, CoreQuestion> cores;
    {
        std::vector<const Question*> unique;
        for (const auto& it : items) {
            if (!cores.count(it.question.id)) {
                cores[it.question.id] = {};
                unique.push_back(&it.question);
            }
        }
        std::vector<CoreQuestion> extracted(unique.size());
        parallel_for(unique.size(), refiner.workers(),
                     [&](std::size_t i) { extracted[i] = judge.extract_core_question(*unique[i]); });
        for (std::size_t i = 0; i < unique.size(); ++i) cores[unique[i]->id] = extracted[i];
    }

    const int workers = refiner.workers();
    ComparisonResult result;
    std::vector<MethodRow> rows{{"Original", metric_values(original)}};
    std::map<std::string, AggregateMetrics> coverage{{"Original", original}};

    for (StrategyId sid : strategies) {
        const Strategy strategy = refiner.strategy(sid);
        struct Slot {
            std::optional<ImprovedResponse> improved;
            std::string failure;
        };
        std::vector<Slot> slots(items.size());
        parallel_for(items.size(), workers, [&](std::size_t i) {
            const ComparisonItem& item = items[i];
            const CoreQuestion& core = cores.at(item.question.id);
            try {
                Response current = item.response;
                Evaluation fb_error = item.error_eval;
                Evaluation fb_score = item.score_eval;
                ImprovedResponse improved;
                for (int round = 1; round <= std::max(refiner.config().rounds, 1); ++round) {
                    std::vector<const Evaluation*> feedback;
                    if (strategy.needs(Scheme::error_based)) feedback.push_back(&fb_error);
                    if (strategy.needs(Scheme::score_based)) feedback.push_back(&fb_score);
                    improved = refiner.improve(item.question, current, sid, feedback);
                    improved.round = round;
                    improved.source_response_id = item.response.id;
                    improved.id = item.response.id + ":" + std::string(to_string(sid));

                    Response as_response = current;
                    as_response.id = improved.id;
                    as_response.text = improved.text;
                    as_response.sentence_count = segment_sentences(improved.text).size();
                    improved.evaluation_after = {
                        judge.evaluate_response(item.question, as_response, Scheme::error_based, &core),
                        judge.evaluate_response(item.question, as_response, Scheme::score_based, &core)};

                    current = as_response;
                    fb_error = improved.evaluation_after[0];
                    fb_score = improved.evaluation_after[1];
                }
                slots[i].improved = std::move(improved);
            } catch (const Error& ex) {
                slots[i].failure = ex.what();
            }
        });

        std::vector<Evaluation> after;
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (slots[i].improved) {
                for (const auto& e : slots[i].improved->evaluation_after) after.push_back(e);
                result.improved.push_back(std::move(*slots[i].improved));
            } else {
                spdlog::warn("{} with {} failed: {}", items[i].response.id, to_string(sid), slots[i].failure);
                result.failures.push_back({items[i].response.id, sid, slots[i].failure});
            }
        }
        MethodRow row{method_label(sid), {}};
        if (!after.empty()) {
            const AggregateMetrics m = aggregate(after, options);
            row.values = metric_values(m);
            coverage[row.method] = m;
        }
        rows.push_back(std::move(row));
    }

    result.comparison = MethodComparison::build(std::move(rows), "Original");
    result.comparison.coverage = std::move(coverage);
    return result;
}

}  // namespace finest
