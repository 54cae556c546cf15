#include <catch_amalgamated.hpp>

#include <set>

#include "finest/assets.hpp"
#include "finest/rng.hpp"
#include "finest/taxonomy.hpp"
#include "finest/text.hpp"
#include "support.hpp"

using namespace finest;

TEST_CASE("segmentation splits on terminal punctuation", "[text]") {
    auto s = segment_sentences("First point. Second one! Is it third? Yes.");
    REQUIRE(s.size() == 4);
    CHECK(s.sentences[0].text == "First point.");
    CHECK(s.sentences[2].text == "Is it third?");
    CHECK(s.sentences[3].index == 4);
    for (const auto& sent : s.sentences) CHECK(s.raw.substr(sent.begin, sent.end - sent.begin).find(sent.text) == 0);
}

TEST_CASE("segmentation respects abbreviations, quotes and newlines", "[text]") {
    CHECK(segment_sentences("Dr. Kim disagrees, e.g. on wages. That is all.").size() == 2);
    CHECK(segment_sentences("He said \"stop.\" Then he left.").size() == 2);
    CHECK(segment_sentences("Line one\nLine two").size() == 2);
    CHECK(segment_sentences("no boundary at all").size() == 1);
    CHECK(segment_sentences("Wait... really?! Yes.").size() == 2);
    CHECK(segment_sentences("Pi is 3.14 roughly. Fine.").size() == 2);
}

TEST_CASE("numbered form prefixes each sentence", "[text]") {
    auto s = segment_sentences("A b. C d.");
    CHECK(s.numbered() == "[1] A b.\n[2] C d.");
}

TEST_CASE("template rendering", "[text]") {
    CHECK(render_template("Q: {{question}} {x}", {{"question", "why?"}}) == "Q: why? {x}");
    REQUIRE_ERRC(render_template("{{missing}}", {}), Errc::missing_variable);
}

TEST_CASE("label normalization", "[text]") {
    CHECK(normalize_label("Non-inclusive (opinion)") == "non_inclusive_opinion");
    CHECK(normalize_label("  inclusive-social_group ") == "inclusive_social_group");
}

TEST_CASE("sha256 known vector", "[text]") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("json extraction", "[json]") {
    CHECK(extract_json("noise [1, 2,] tail", '[', ParseMode::lenient) == json::array({1, 2}));
    CHECK_FALSE(extract_json("noise [1, 2] tail", '[', ParseMode::strict));
    CHECK(extract_json(" [1] ", '[', ParseMode::strict) == json::array({1}));
    CHECK(extract_json("```json\n{\"a\": \"]\"}\n```", '{', ParseMode::lenient) == json{{"a", "]"}});
    auto second = extract_json("[] then [3]", '[', ParseMode::lenient, [](const json& j) { return !j.empty(); });
    CHECK(second == json::array({3}));
    CHECK(repair_trailing_commas("{\"a\": \",}\",}") == "{\"a\": \",}\"}");
    CHECK(match_bracket("[\"]\" , [1]] x", 0) == 11u);
    CHECK_FALSE(match_bracket("[[1]", 0));
}

TEST_CASE("coercions", "[json]") {
    CHECK(coerce_bool(json("TRUE")) == true);
    CHECK(coerce_bool(json(false)) == false);
    CHECK_FALSE(coerce_bool(json("yes")));
    CHECK(coerce_integer(json(" 4 ")) == 4);
    CHECK(coerce_integer(json(4.0)) == 4);
    CHECK(coerce_integer(json("4.0")) == 4);
    CHECK_FALSE(coerce_integer(json(4.5)));
    CHECK_FALSE(coerce_integer(json("four")));
}

TEST_CASE("rng is reproducible and unbiased enough", "[rng]") {
    Rng a(7), b(7);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
    Rng r(1);
    std::array<int, 3> hist{};
    for (int i = 0; i < 30000; ++i) ++hist[r.below(3)];
    for (int h : hist) CHECK(std::abs(h - 10000) < 500);
    CHECK(mix_seed(1, "x") != mix_seed(1, "y"));
    CHECK(mix_seed(1, "x") == mix_seed(1, "x"));
}

TEST_CASE("taxonomy registry shape", "[taxonomy]") {
    const Taxonomy& t = taxonomy_registry();
    CHECK(t.error_types.size() == 11);
    CHECK(t.lookup(Category::content).size() == 4);
    CHECK(t.lookup(Category::content, true).size() == 5);
    CHECK(t.lookup(Category::logic).size() == 4);
    CHECK(t.lookup(Category::appropriateness).size() == 2);
    REQUIRE(t.catch_all(Category::content) != nullptr);
    CHECK(t.catch_all(Category::logic) == nullptr);
    CHECK(t.catch_all(Category::appropriateness) == nullptr);
    std::set<std::string> ids;
    for (const auto& e : t.error_types) ids.insert(e.id);
    CHECK(ids.size() == t.error_types.size());
    CHECK(t.score_bands.size() == 4);
}

TEST_CASE("label canonicalization", "[taxonomy]") {
    const Taxonomy& t = taxonomy_registry();
    CHECK(t.canonicalize_label("inclusive-opinion", Category::content).id == "non_inclusive_opinion");
    CHECK(t.canonicalize_label("Non-predictive", Category::content).id == "predictive");
    CHECK(t.canonicalize_label("OTHER", Category::content).id == "content_other");
    CHECK(t.canonicalize_label("Off focus", Category::logic).id == "off_focus");
    REQUIRE_ERRC(t.canonicalize_label("other", Category::logic), Errc::unknown_label);
    REQUIRE_ERRC(t.canonicalize_label("repetition", Category::content), Errc::unknown_label);
    REQUIRE_ERRC(t.by_id("nope"), Errc::unknown_label);
}

TEST_CASE("taxonomy serialization round-trips and matches the shipped asset", "[taxonomy]") {
    const Taxonomy& t = taxonomy_registry();
    const std::string text = t.serialize();
    CHECK(Taxonomy::parse(text) == t);
    CHECK(read_text_file(AssetStore::shipped().path("taxonomy.json")) == text);
}

TEST_CASE("every rubric asset exists and describe lists all types", "[taxonomy]") {
    const Taxonomy& t = taxonomy_registry();
    const AssetStore assets = AssetStore::shipped();
    for (Category c : kCategories) {
        for (Scheme s : kSchemes) {
            const std::string rubric = t.render_rubric(c, s, assets);
            CHECK_FALSE(rubric.empty());
            CHECK(rubric == assets.load(t.rubric_path(c, s)));
        }
    }
    const std::string d = t.describe();
    for (const auto& e : t.error_types) CHECK(d.find(e.name) != std::string::npos);
    REQUIRE_ERRC(assets.load("rubrics/none.txt"), Errc::missing_template);
}
