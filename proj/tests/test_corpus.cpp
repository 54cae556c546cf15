#include <catch_amalgamated.hpp>

#include <set>

#include "finest/corpus.hpp"
#include "finest/mock_world.hpp"
#include "support.hpp"

using namespace finest;
using test_support::fixtures_dir;

namespace {

std::vector<SourceRecord> fixture_records() {
    const json mapping = test_support::load_fixture("sources/sources.json");
    std::vector<SourceRecord> all;
    for (const auto& s : mapping["sources"]) {
        auto recs = load_source(SourceSpec::from_json(s, fixtures_dir() / "sources"));
        all.insert(all.end(), recs.begin(), recs.end());
    }
    return all;
}

struct World {
    Gateway gateway;
    std::shared_ptr<MockBackend> mock = std::make_shared<MockBackend>(11, make_mock_responder());

    World() {
        for (const char* m : {"helper", "gen-a", "gen-b", "gen-c"}) gateway.register_backend(m, mock);
    }
    CorpusBuilder builder() {
        CorpusOptions o;
        o.transform_model = "helper";
        o.filter_model = "helper";
        return CorpusBuilder(gateway, AssetStore::shipped(), o);
    }
};

}  // namespace

TEST_CASE("delimited parsing handles quotes and embedded newlines", "[corpus]") {
    auto rows = parse_delimited("a,b\n\"x, y\",\"say \"\"hi\"\"\nthere\"\n", ',');
    REQUIRE(rows.size() == 2);
    CHECK(rows[1][0] == "x, y");
    CHECK(rows[1][1] == "say \"hi\"\nthere");
    auto tsv = parse_delimited("a\tb\r\n1\t2\r\n", '\t');
    REQUIRE(tsv.size() == 2);
    CHECK(tsv[1][1] == "2");
}

TEST_CASE("source files load with schema mapping", "[corpus]") {
    auto records = fixture_records();
    std::map<Source, int> per;
    for (const auto& r : records) ++per[r.source];
    CHECK(per[Source::square_train] == 9);
    CHECK(per[Source::kold] == 6);
    CHECK(per[Source::ibm] == 7);
    for (const auto& r : records) {
        if (r.source == Source::kold) {
            CHECK(r.fields.count("title") == 1);
            CHECK(r.fields.count("comment") == 1);
        }
        if (r.source == Source::ibm) CHECK(r.fields.count("argument") == 1);
    }
    SourceSpec missing;
    missing.path = fixtures_dir() / "sources" / "absent.jsonl";
    REQUIRE_ERRC(load_source(missing), Errc::io_error);
}

TEST_CASE("corpus output parsers", "[corpus]") {
    CHECK(parse_transform_output("Sure! {\"question\": \"Should taxes rise\"}") == "Should taxes rise?");
    CHECK(parse_transform_output("{\"question\": \"Is it fair?\"}") == "Is it fair?");
    REQUIRE_ERRC(parse_transform_output("{\"question\": \"\"}"), Errc::transform_parse_failure);
    REQUIRE_ERRC(parse_transform_output("no json"), Errc::transform_parse_failure);

    auto v = parse_filter_verdict("Answer: {\"controversial\": \"False\", \"unsatisfied_category\": [\"1\", 2]}");
    CHECK_FALSE(v.controversial);
    CHECK(v.unsatisfied_category == std::set<std::string>{"1", "2"});
    CHECK(parse_filter_verdict("{\"controversial\": true}").controversial);
    REQUIRE_ERRC(parse_filter_verdict("{\"controversial\": false}"), Errc::filter_parse_failure);
    REQUIRE_ERRC(parse_filter_verdict("{\"controversial\": true, \"unsatisfied_category\": [\"3\"]}"),
                 Errc::filter_parse_failure);
    REQUIRE_ERRC(parse_filter_verdict("{\"controversial\": \"maybe\"}"), Errc::filter_parse_failure);

    auto c = parse_criteria_verdict(
        "{\"C1\": \"True\", \"C2\": true, \"C3\": \"true\", \"C4\": true, \"C5\": true, \"C6\": \"False\"}");
    CHECK_FALSE(c.pass());
    CHECK(c.criteria[0]);
    CHECK_FALSE(c.criteria[5]);
    REQUIRE_ERRC(parse_criteria_verdict("{\"C1\": true}"), Errc::filter_parse_failure);
}

TEST_CASE("question normalization", "[corpus]") {
    CHECK(normalize_question_text("  Is it right ") == "Is it right?");
    CHECK(normalize_question_text("Is it right?") == "Is it right?");
}

TEST_CASE("build transforms, filters and records drop reasons", "[corpus]") {
    World w;
    auto result = w.builder().build(fixture_records());
    CHECK(result.questions.size() == 20);
    CHECK(result.dropped.size() == 2);
    std::set<std::string> reasons;
    for (const auto& q : result.dropped) reasons.insert(q.filter_trace.dropped_reason);
    CHECK(reasons.count("not controversial") == 1);
    CHECK(reasons.count("criteria not met: C2") == 1);
    for (const auto& q : result.questions) {
        CHECK(q.in_final_corpus());
        if (q.source != Source::square_train) CHECK(q.text.back() == '?');
        CHECK_FALSE(q.origin.empty());
    }
    // Square questions pass through verbatim.
    for (const auto& q : result.questions) {
        if (q.source == Source::square_train) CHECK(q.text == q.origin["question"].get<std::string>());
    }
}

TEST_CASE("malformed helper output is retried, then the record is dropped", "[corpus]") {
    World w;
    w.mock->add_fixture("transform", "kold-k1", "*", "*", {"garbled", "{\"question\": \"Should drivers pay to enter cities\"}"});
    w.mock->add_fixture("transform", "kold-k2", "*", "*", {"garbled"});
    auto result = w.builder().build(fixture_records());
    const Question* k1 = nullptr;
    const Question* k2 = nullptr;
    for (const auto& q : result.questions) {
        if (q.id == "kold-k1") k1 = &q;
    }
    for (const auto& q : result.dropped) {
        if (q.id == "kold-k2") k2 = &q;
    }
    REQUIRE(k1 != nullptr);
    CHECK(k1->text == "Should drivers pay to enter cities?");
    REQUIRE(k2 != nullptr);
    CHECK(k2->filter_trace.dropped_reason.find("TransformParseFailure") != std::string::npos);
}

TEST_CASE("duplicate question texts are dropped", "[corpus]") {
    World w;
    std::vector<SourceRecord> recs = {
        {"a", Source::square_train, {{"question", "Should voting be mandatory?"}}},
        {"b", Source::square_train, {{"question", "Should voting be mandatory?"}}},
    };
    auto result = w.builder().build(recs);
    CHECK(result.questions.size() == 1);
    REQUIRE(result.dropped.size() == 1);
    CHECK(result.dropped[0].filter_trace.dropped_reason == "duplicate question text");
}

TEST_CASE("response generation is a models x stances product", "[corpus]") {
    World w;
    auto result = w.builder().build(fixture_records());
    REQUIRE(result.questions.size() >= 10);
    std::vector<Question> qs(result.questions.begin(), result.questions.begin() + 10);
    const std::vector<std::string> models = {"gen-a", "gen-b"};
    std::vector<Response> all;
    for (const auto& q : qs) {
        auto batch = generate_responses(w.gateway, AssetStore::shipped(), q, models,
                                        {Stance::agree, Stance::disagree, Stance::default_stance});
        CHECK(batch.missing.empty());
        all.insert(all.end(), batch.responses.begin(), batch.responses.end());
    }
    CHECK(all.size() == 60);
    std::set<std::string> ids;
    for (const auto& r : all) {
        ids.insert(r.id);
        CHECK(r.sentence_count > 0);
    }
    CHECK(ids.size() == 60);
    auto stats = corpus_stats(qs, all);
    CHECK(stats.responses == 60);
    CHECK(stats.per_question == 6);
    CHECK(stats.product_check);

    REQUIRE_ERRC(generate_responses(w.gateway, AssetStore::shipped(), qs[0], {"gen-a", "gen-a"}, {Stance::agree}),
                 Errc::duplicate_response);
    REQUIRE_ERRC(generate_responses(w.gateway, AssetStore::shipped(), qs[0], {"gen-a"}, {Stance::agree, Stance::agree}),
                 Errc::duplicate_response);
}

TEST_CASE("stance prompts wrap the question, default sends it bare", "[corpus]") {
    Question q;
    q.id = "q";
    q.text = "Should cities ban cars?";
    const AssetStore assets = AssetStore::shipped();
    CHECK(build_response_request(q, "m", Stance::default_stance, assets).user_text() == q.text);
    const std::string agree = build_response_request(q, "m", Stance::agree, assets).user_text();
    const std::string disagree = build_response_request(q, "m", Stance::disagree, assets).user_text();
    CHECK(agree.find(q.text) != std::string::npos);
    CHECK(agree.find("agrees") != std::string::npos);
    CHECK(disagree.find("disagrees") != std::string::npos);
    CHECK(build_response_request(q, "m", Stance::agree, assets).temperature == 0.0);
}

TEST_CASE("backend failures become missing responses and break the product check", "[corpus]") {
    Gateway gw;
    gw.register_backend("ok", std::make_shared<MockBackend>(1, make_mock_responder()));
    Question q;
    q.id = "q";
    q.text = "Should homework be banned?";
    auto batch = generate_responses(gw, AssetStore::shipped(), q, {"ok", "absent"}, {Stance::agree});
    CHECK(batch.responses.size() == 1);
    REQUIRE(batch.missing.size() == 1);
    CHECK(batch.missing[0].model_id == "absent");
    auto stats = corpus_stats({q}, batch.responses, 2);
    CHECK(stats.deficit == 1);
    CHECK_FALSE(stats.product_check);
}

TEST_CASE("records round-trip through json", "[corpus]") {
    Question q;
    q.id = "ibm-1";
    q.text = "Is it fair?";
    q.source = Source::ibm;
    q.origin = {{"argument", "x"}};
    q.filter_trace.controversy = FilterVerdict{true, {}, "r"};
    q.filter_trace.criteria = CriteriaVerdict{{true, true, true, true, true, true}, "ok"};
    const Question back = question_from_json(to_json(q));
    CHECK(back.id == q.id);
    CHECK(back.source == Source::ibm);
    CHECK(back.in_final_corpus());
    CHECK(back.origin == q.origin);

    Response r{"q:m:agree", "q", "m", Stance::agree, "Text.", 1};
    const Response rb = response_from_json(to_json(r));
    CHECK(rb.id == r.id);
    CHECK(rb.stance == Stance::agree);
}
