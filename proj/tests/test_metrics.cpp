#include <catch_amalgamated.hpp>

#include "finest/metrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace finest;
using Catch::Approx;

namespace {

ErrorRecord rec(std::vector<int> idx, std::string type = "repetition") {
    return ErrorRecord{Span::of(std::move(idx)), std::move(type), ""};
}

Evaluation error_eval(const std::string& id, int n, std::array<std::vector<ErrorRecord>, 3> per_cat) {
    Evaluation e;
    e.response_id = id;
    e.scheme = Scheme::error_based;
    e.n_sentences = n;
    for (std::size_t c = 0; c < 3; ++c) {
        e.categories[c].category = kCategories[c];
        e.categories[c].status = CategoryStatus::ok;
        e.categories[c].records = per_cat[c];
    }
    return e;
}

Evaluation score_eval(const std::string& id, std::array<int, 3> scores) {
    Evaluation e;
    e.response_id = id;
    e.scheme = Scheme::score_based;
    e.n_sentences = 3;
    for (std::size_t c = 0; c < 3; ++c) {
        e.categories[c].category = kCategories[c];
        e.categories[c].status = CategoryStatus::ok;
        e.categories[c].score = ScoreRecord{scores[c], ""};
    }
    return e;
}

std::vector<MethodRow> published_rows(const json& pub) {
    std::vector<MethodRow> rows;
    for (const auto& r : pub["rows"]) {
        MethodRow row{r["method"], {}};
        for (std::size_t m = 0; m < kMetricCount; ++m) row.values[m] = r["values"][m].get<double>();
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

TEST_CASE("error sentence ratio matches the flag-vector oracle", "[metrics]") {
    Rng rng(99);
    for (int t = 0; t < 500; ++t) {
        const int n = 1 + static_cast<int>(rng.below(12));
        const auto recs = oracle::random_records(rng, n);
        CHECK(error_sentence_ratio(recs, n) == oracle::error_sentence_ratio(recs, n));
    }
}

TEST_CASE("error sentence ratio edge cases", "[metrics]") {
    CHECK(error_sentence_ratio({}, 4) == 0.0);
    CHECK(error_sentence_ratio({rec({1, 2}), rec({2, 3})}, 4) == 0.75);
    CHECK(error_sentence_ratio({rec({1}), ErrorRecord{Span::everything(), "unresponsive", ""}}, 5) == 1.0);
    CHECK(flagged_sentence_count({rec({1, 2}), rec({2})}, 3) == 2);
    REQUIRE_ERRC(error_sentence_ratio({}, 0), Errc::invalid_argument);
}

TEST_CASE("overall ratio and score skip failed categories", "[metrics]") {
    Evaluation e = error_eval("r", 4, {std::vector<ErrorRecord>{rec({1})}, {rec({1, 2})}, {}});
    CHECK(overall_ratio(e) == Approx((0.25 + 0.5 + 0.0) / 3));
    e.categories[2].status = CategoryStatus::failed;
    CHECK(overall_ratio(e) == Approx(0.375));
    Evaluation s = score_eval("r", {3, 5, 7});
    CHECK(overall_score(s) == Approx(5.0));
    for (auto& c : s.categories) c.status = CategoryStatus::failed;
    CHECK_FALSE(overall_score(s));
}

TEST_CASE("aggregate means versus pooled ratios", "[metrics]") {
    std::vector<Evaluation> evals = {
        error_eval("a", 2, {std::vector<ErrorRecord>{rec({1})}, {}, {}}),
        error_eval("b", 8, {std::vector<ErrorRecord>{}, {}, {}}),
        score_eval("a", {4, 5, 6}),
        score_eval("b", {6, 5, 4}),
    };
    auto mean = aggregate(evals);
    CHECK(*mean.at(Category::content).error_sentence_ratio == Approx(0.25));  // (0.5 + 0) / 2
    CHECK(*mean.at(Category::content).score == Approx(5.0));
    CHECK(mean.at(Category::content).ratio_count == 2);
    auto pooled = aggregate(evals, {true});
    CHECK(*pooled.at(Category::content).error_sentence_ratio == Approx(0.1));  // 1 / 10
    REQUIRE_ERRC(aggregate({}), Errc::empty_input);
}

TEST_CASE("error type ratio counts responses per type", "[metrics]") {
    std::vector<Evaluation> evals = {
        error_eval("a", 3, {std::vector<ErrorRecord>{rec({1}, "predictive"), rec({2}, "predictive")}, {}, {}}),
        error_eval("b", 3, {std::vector<ErrorRecord>{rec({1}, "content_other")}, {rec({1}, "repetition")}, {}}),
        error_eval("c", 3, {std::vector<ErrorRecord>{}, {}, {}}),
        error_eval("d", 3, {std::vector<ErrorRecord>{}, {}, {}}),
    };
    evals[3].categories[0].status = CategoryStatus::failed;
    auto r = error_type_ratio(evals);
    CHECK(r.at("predictive") == Approx(100.0 / 3));
    CHECK(r.at("content_other") == Approx(100.0 / 3));
    CHECK(r.at("repetition") == Approx(25.0));
    CHECK(r.at("unresponsive") == 0.0);
    CHECK(r.size() == taxonomy_registry().error_types.size());
}

TEST_CASE("relative change", "[metrics]") {
    CHECK(relative_change(0.72, 0.44) == Approx(-38.888888).epsilon(1e-6));
    CHECK(relative_change(4.0, 5.0) == Approx(25.0));
    REQUIRE_ERRC(relative_change(0.0, 1.0), Errc::zero_baseline);
}

TEST_CASE("published comparison: relative changes and wins", "[metrics][published]") {
    const json pub = test_support::load_fixture("published.json")["comparison"];
    const auto cmp = MethodComparison::build(published_rows(pub), "Original");
    const auto& base = pub["rows"][0]["values"];
    double worst = 0.0;
    for (const auto& r : pub["rows"]) {
        if (!r.contains("printed_change")) continue;
        const auto& changes = cmp.relative_changes.at(r["method"]);
        for (std::size_t m = 0; m < kMetricCount; ++m) {
            const double oracle_pct = oracle::pct(base[m].get<double>(), r["values"][m].get<double>());
            REQUIRE(changes[m]);
            CHECK(*changes[m] == Approx(oracle_pct).margin(1e-9));
            const double dev = std::abs(*changes[m] - r["printed_change"][m].get<double>());
            worst = std::max(worst, dev);
            CHECK(dev <= 2.0);
        }
    }
    CHECK(worst > 0.0);  // the printed values came from unrounded means
    for (const auto& [method, wins] : pub["wins"].items()) CHECK(cmp.wins.at(method) == wins.get<int>());
    CHECK(cmp.wins.count("Original") == 0);
}

TEST_CASE("win counting rules", "[metrics]") {
    std::vector<MethodRow> rows = {
        {"A", {0.5, 0.5, 0.5, 5.0, 5.0, 5.0}},
        {"B", {0.5, 0.4, 0.6, 5.0, 6.0, std::nullopt}},
    };
    auto w = win_counts(rows);
    CHECK(w["A"] == 4);  // ties on content ratio and content score both count
    CHECK(w["B"] == 4);
    CHECK(metric_minimized(0));
    CHECK_FALSE(metric_minimized(3));
    CHECK(metric_name(5) == "appropriateness_score");
}

TEST_CASE("comparison text and rows", "[metrics]") {
    const json pub = test_support::load_fixture("published.json")["comparison"];
    const auto cmp = MethodComparison::build(published_rows(pub), "Original");
    const std::string text = cmp.to_text();
    CHECK(text.find("Improved_FINEST-Score") != std::string::npos);
    CHECK(text.find("(-38.89%)") != std::string::npos);
    CHECK(cmp.to_jsonl().size() == 5);
    REQUIRE_ERRC(MethodComparison::build(published_rows(pub), "Missing"), Errc::invalid_argument);
}
