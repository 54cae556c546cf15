#include <catch_amalgamated.hpp>

#include "finest/mock_world.hpp"
#include "finest/refine.hpp"
#include "probes.hpp"
#include "support.hpp"

using namespace finest;

namespace {

struct RefineWorld {
    Gateway gateway;
    std::shared_ptr<MockBackend> mock = std::make_shared<MockBackend>(5, make_mock_responder());
    Question question{"q1", "Should school uniforms be mandatory?", Source::square_train, json::object(), {}};
    Response response{"q1:gen:agree", "q1", "gen", Stance::agree,
                      "Uniforms reduce peer pressure. This is the only sensible view, and anyone who disagrees is "
                      "simply wrong. They also save families money.",
                      3};

    RefineWorld() {
        gateway.register_backend("judge", mock);
        gateway.register_backend("refiner", mock);
    }
    Judge judge() {
        JudgeConfig c;
        c.model_id = "judge";
        return Judge(gateway, AssetStore::shipped(), c);
    }
    Refiner refiner(bool appendix = false) {
        RefineConfig c;
        c.model_id = "refiner";
        c.matrix.appendix_table = appendix;
        return Refiner(gateway, AssetStore::shipped(), c);
    }
};

Evaluation scripted_error_eval(const std::string& response_id) {
    Evaluation e;
    e.response_id = response_id;
    e.scheme = Scheme::error_based;
    e.n_sentences = 3;
    for (std::size_t c = 0; c < 3; ++c) {
        e.categories[c].category = kCategories[c];
        e.categories[c].status = CategoryStatus::ok;
    }
    e.categories[0].records = {ErrorRecord{Span::of({2}), "non_inclusive_opinion", "dismisses disagreement"}};
    e.categories[1].records = {ErrorRecord{Span::of({1, 3}), "missing_step", "no evidence"}};
    e.categories[2].status = CategoryStatus::failed;
    return e;
}

Evaluation scripted_score_eval(const std::string& response_id) {
    Evaluation e;
    e.response_id = response_id;
    e.scheme = Scheme::score_based;
    e.n_sentences = 3;
    const int scores[] = {3, 4, 6};
    for (std::size_t c = 0; c < 3; ++c) {
        e.categories[c].category = kCategories[c];
        e.categories[c].status = CategoryStatus::ok;
        e.categories[c].score = ScoreRecord{scores[c], "justification " + std::to_string(c)};
    }
    return e;
}

}  // namespace

TEST_CASE("strategy matrices", "[refine]") {
    StrategyMatrix main;
    CHECK_FALSE(main.get(StrategyId::self).include_taxonomy);
    CHECK(main.get(StrategyId::self).feedback_schemes.empty());
    CHECK(main.get(StrategyId::taxo_only).include_taxonomy);
    CHECK(main.get(StrategyId::taxo_only).feedback_schemes.empty());
    CHECK(main.get(StrategyId::finest_error).include_taxonomy);
    CHECK(main.get(StrategyId::finest_error).feedback_schemes == std::vector<Scheme>{Scheme::error_based});
    CHECK(main.get(StrategyId::finest_score).include_taxonomy);
    CHECK(main.get(StrategyId::finest_score).feedback_schemes == std::vector<Scheme>{Scheme::score_based});
    StrategyMatrix alt{true};
    CHECK_FALSE(alt.get(StrategyId::finest_error).include_taxonomy);
    CHECK(alt.get(StrategyId::finest_error).needs(Scheme::score_based));
    CHECK(parse_strategy("score") == StrategyId::finest_score);
    CHECK(parse_strategy("taxo") == StrategyId::taxo_only);
    CHECK(method_label(StrategyId::finest_error) == "Improved_FINEST-Error");
}

TEST_CASE("feedback rendering", "[refine]") {
    const Evaluation e = scripted_error_eval("r");
    const std::string fb = render_error_feedback(e);
    CHECK(fb.find("Sentence(s) 2: Non-inclusive (opinion)") != std::string::npos);
    CHECK(fb.find("Sentence(s) 1, 3:") != std::string::npos);
    CHECK(fb.find("No errors found") == std::string::npos);
    CHECK(fb.find("(evaluation unavailable)") != std::string::npos);
    const std::string sfb = render_score_feedback(scripted_score_eval("r"));
    CHECK(sfb.find("Content: 3/7") != std::string::npos);
    CHECK(sfb.find("justification 2") != std::string::npos);
}

TEST_CASE("improvement prompts contain exactly what each strategy allows", "[refine]") {
    RefineWorld w;
    const Evaluation ee = scripted_error_eval(w.response.id);
    const Evaluation se = scripted_score_eval(w.response.id);
    for (bool appendix : {false, true}) {
        const auto report = test_support::probe_strategy_matrix(w.refiner(appendix), w.question, w.response, ee, se);
        INFO(Catch::StringMaker<std::vector<std::string>>::convert(report.problems));
        CHECK(report.ok());
        CHECK(report.prompts == 4);
    }
}

TEST_CASE("feedback that does not fit the strategy is refused", "[refine]") {
    RefineWorld w;
    const Refiner r = w.refiner();
    const Evaluation ee = scripted_error_eval(w.response.id);
    const Evaluation se = scripted_score_eval(w.response.id);
    REQUIRE_ERRC(r.build_improvement_prompt(w.question, w.response, StrategyId::self, {&ee}), Errc::feedback_not_allowed);
    REQUIRE_ERRC(r.build_improvement_prompt(w.question, w.response, StrategyId::finest_error, {&se}),
                 Errc::feedback_scheme_mismatch);
    REQUIRE_ERRC(r.build_improvement_prompt(w.question, w.response, StrategyId::finest_score, {}),
                 Errc::missing_feedback);
    const Evaluation other = scripted_error_eval("someone-else");
    REQUIRE_ERRC(r.build_improvement_prompt(w.question, w.response, StrategyId::finest_error, {&other}),
                 Errc::invalid_argument);
}

TEST_CASE("improve keeps the completion verbatim", "[refine]") {
    RefineWorld w;
    w.mock->add_fixture("improve", "*", "*", "*", {"  Rewritten text.\n"});
    const auto out = w.refiner().improve(w.question, w.response, StrategyId::self, {});
    CHECK(out.text == "  Rewritten text.\n");
    CHECK(out.id == w.response.id + ":self");
    CHECK(out.provenance == Provenance::mock);
    const auto back = ImprovedResponse::from_json(out.to_json());
    CHECK(back.text == out.text);
    CHECK(back.strategy == StrategyId::self);
}

TEST_CASE("comparison improves, re-judges and tabulates", "[refine]") {
    RefineWorld w;
    Judge judge = w.judge();
    Refiner refiner = w.refiner();
    std::vector<ComparisonItem> items;
    for (int i = 0; i < 4; ++i) {
        ComparisonItem item;
        item.question = w.question;
        item.question.id = "q" + std::to_string(i);
        item.response = w.response;
        item.response.id = item.question.id + ":gen:agree";
        item.response.question_id = item.question.id;
        item.error_eval = judge.evaluate_response(item.question, item.response, Scheme::error_based);
        item.score_eval = judge.evaluate_response(item.question, item.response, Scheme::score_based);
        items.push_back(item);
    }
    const std::string before = items[0].error_eval.to_json().dump();
    auto result = run_comparison(items, {kStrategies.begin(), kStrategies.end()}, refiner, judge);
    CHECK(items[0].error_eval.to_json().dump() == before);
    CHECK(result.failures.empty());
    REQUIRE(result.improved.size() == 16);
    CHECK(result.improved[0].strategy == StrategyId::self);
    CHECK(result.improved[4].strategy == StrategyId::taxo_only);
    for (const auto& imp : result.improved) {
        REQUIRE(imp.evaluation_after.size() == 2);
        CHECK(imp.evaluation_after[0].scheme == Scheme::error_based);
        CHECK(imp.evaluation_after[1].scheme == Scheme::score_based);
        CHECK(imp.evaluation_after[0].response_id == imp.id);
    }
    const auto& cmp = result.comparison;
    REQUIRE(cmp.rows.size() == 5);
    CHECK(cmp.rows[0].method == "Original");
    int total = 0;
    for (const auto& [m, n] : cmp.wins) total += n;
    CHECK(total >= 6);
}
