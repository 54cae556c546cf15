// Acceptance gate: one PASS/FAIL line per primary criterion. Exits non-zero
// when any criterion fails. Tolerances are pinned here, not configurable.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "e2e.hpp"
#include "finest/metrics.hpp"
#include "finest/mock_world.hpp"
#include "finest/study.hpp"
#include "oracles.hpp"
#include "parser_corpus.hpp"
#include "probes.hpp"

using namespace finest;

namespace {

constexpr int kOracleInstances = 500;
constexpr int kOracleMaxSentences = 12;
constexpr double kOracleSeconds = 5.0;
constexpr double kRelativeChangeTolerancePp = 2.0;
constexpr double kAlphaTolerance = 1e-9;
constexpr std::size_t kMinParserFixtures = 30;
constexpr std::size_t kFuzzIterations = 10000;
constexpr int kBucketPairs = 10000;
constexpr std::size_t kSamplePerBucket = 1000;
constexpr double kEndToEndSeconds = 60.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double round1(double v) { return std::round(v * 10.0) / 10.0; }

Outcome metric_oracle() {
    Rng rng(20240917);
    const auto start = std::chrono::steady_clock::now();
    int mismatches = 0;
    for (int t = 0; t < kOracleInstances; ++t) {
        const int n = 1 + static_cast<int>(rng.below(kOracleMaxSentences));
        const auto recs = oracle::random_records(rng, n);
        if (error_sentence_ratio(recs, n) != oracle::error_sentence_ratio(recs, n)) ++mismatches;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {mismatches == 0 && secs < kOracleSeconds,
            fmt::format("{} instances, {} mismatches, {:.3f} s (limit {} s)", kOracleInstances, mismatches, secs,
                        kOracleSeconds)};
}

MethodComparison published_comparison(const json& pub) {
    std::vector<MethodRow> rows;
    for (const auto& r : pub["rows"]) {
        MethodRow row{r["method"], {}};
        for (std::size_t m = 0; m < kMetricCount; ++m) row.values[m] = r["values"][m].get<double>();
        rows.push_back(row);
    }
    return MethodComparison::build(rows, "Original");
}

Outcome win_counts_reproduced(const json& pub) {
    const auto cmp = published_comparison(pub);
    bool ok = true;
    std::string got;
    for (const auto& [method, wins] : pub["wins"].items()) {
        const int w = cmp.wins.at(method);
        ok = ok && w == wins.get<int>();
        got += fmt::format("{}={} ", method, w);
    }
    return {ok, got + "(published: Score 4, Error 2, TaxoOnly 0, Self 0)"};
}

Outcome relative_changes_reproduced(const json& pub) {
    const auto cmp = published_comparison(pub);
    const auto& base = pub["rows"][0]["values"];
    int cells = 0;
    int within = 0;
    double worst = 0.0;
    bool oracle_agrees = true;
    for (const auto& r : pub["rows"]) {
        if (!r.contains("printed_change")) continue;
        const auto& changes = cmp.relative_changes.at(r["method"]);
        for (std::size_t m = 0; m < kMetricCount; ++m) {
            ++cells;
            const double recomputed = *changes[m];
            oracle_agrees = oracle_agrees &&
                            std::abs(recomputed - oracle::pct(base[m].get<double>(), r["values"][m].get<double>())) < 1e-9;
            const double dev = std::abs(recomputed - r["printed_change"][m].get<double>());
            worst = std::max(worst, dev);
            if (dev <= kRelativeChangeTolerancePp) ++within;
        }
    }
    return {cells == 24 && within == cells && oracle_agrees,
            fmt::format("{}/{} cells within ±{:.1f}pp, max deviation {:.2f}pp", within, cells,
                        kRelativeChangeTolerancePp, worst)};
}

Outcome win_rate_arithmetic(const json& rates) {
    bool ok = true;
    std::string detail;
    const std::size_t total = rates["tasks"].get<std::size_t>();
    for (std::size_t a = 0; a < 4; ++a) {
        const std::size_t wins = rates["improved_wins"][a].get<std::size_t>();
        const double pct = round1(win_rate_percent(wins, total));
        ok = ok && pct == rates["printed_rate"][a].get<double>();
        detail += fmt::format("{}/{}={:.1f} ", wins, total, pct);
    }
    return {ok, detail};
}

Outcome alpha_checks() {
    using Ratings = std::vector<std::vector<std::optional<std::string>>>;
    const Ratings perfect = {{"a", "b", "a", "c"}, {"a", "b", "a", "c"}, {"a", "b", "a", "c"}};
    const Ratings worked = {{"a", "a", "b", "b"}, {"a", "b", "b", "b"}, {"a", "a", "b", "c"}};
    const Ratings unanimous = {{"x", "x", "x"}, {"x", "x", "x"}};
    const double p = krippendorff_alpha(perfect);
    const double w = krippendorff_alpha(worked);
    const double o = oracle::krippendorff_alpha(worked);
    bool degenerate = false;
    try {
        krippendorff_alpha(unanimous);
    } catch (const Error& e) {
        degenerate = e.code() == Errc::degenerate_data;
    }
    const bool ok = std::abs(p - 1.0) < kAlphaTolerance && std::abs(w - o) < kAlphaTolerance &&
                    std::abs(w - 19.0 / 41.0) < kAlphaTolerance && degenerate;
    return {ok, fmt::format("perfect={:.12f}, worked={:.12f} vs oracle {:.12f}, unanimous->{}", p, w, o,
                            degenerate ? "DegenerateData" : "no error")};
}

Outcome parser_corpus() {
    const json fixtures = test_support::load_fixture("parser_fixtures.json");
    std::size_t passed = 0;
    std::string first_failure;
    for (const auto& fx : fixtures) {
        const auto r = test_support::run_parser_fixture(fx);
        if (r.passed) {
            ++passed;
        } else if (first_failure.empty()) {
            first_failure = r.name + ": " + r.detail;
        }
    }
    const auto fuzz = test_support::fuzz_parsers(fixtures, kFuzzIterations, 77);
    const bool ok = fixtures.size() >= kMinParserFixtures && passed == fixtures.size() &&
                    fuzz.iterations == kFuzzIterations && fuzz.foreign_exceptions == 0 && fuzz.invariant_violations == 0;
    std::string detail = fmt::format("{}/{} fixtures; fuzz {} iterations: {} parsed, {} typed errors, {} untyped, {} "
                                     "invariant violations",
                                     passed, fixtures.size(), fuzz.iterations, fuzz.parsed, fuzz.typed_errors,
                                     fuzz.foreign_exceptions, fuzz.invariant_violations);
    if (!first_failure.empty()) detail += "; first failure: " + first_failure;
    if (!fuzz.first_problem.empty()) detail += "; " + fuzz.first_problem;
    return {ok, detail};
}

Outcome corpus_invariant(const test_support::MockRun& run, const std::filesystem::path& dir) {
    const json stats = json::parse(read_text_file(dir / "corpus_stats.json"));
    const auto models = run.manifest["config"]["generation_models"].size();
    const auto stances = run.manifest["config"]["stances"].size();
    const bool ok = stats["questions"] == 20 && stats["responses"] == 180 && stats["per_question"] == 9 &&
                    stats["product_check"] == true && models == 3 && stances == 3;
    return {ok, fmt::format("questions={}, responses={}, models x stances={}x{}, product_check={}",
                            stats["questions"].dump(), stats["responses"].dump(), models, stances,
                            stats["product_check"].dump())};
}

Outcome bucketing_partition() {
    Rng rng(31337);
    const auto t = BucketThresholds::defaults();
    int violations = 0;
    for (int i = 0; i < kBucketPairs; ++i) {
        double ratio = rng.unit();
        double score = 1.0 + 6.0 * rng.unit();
        if (rng.below(10) == 0) ratio = t.avg_ratio;
        if (rng.below(10) == 0) score = t.avg_score;
        const bool bad = ratio > t.avg_ratio && score < t.avg_score;
        const bool good = ratio < t.avg_ratio && score > t.avg_score;
        const int members = int(bad) + int(good) + int(!bad && !good);
        const Bucket expected = bad ? Bucket::bad : good ? Bucket::good : Bucket::ngnb;
        if (members != 1 || bucket(ratio, score, t) != expected) ++violations;
    }

    std::vector<BucketedResponse> pop;
    for (Bucket b : kBuckets) {
        for (Stance s : kStances) {
            for (int i = 0; i < 600; ++i) {
                BucketedResponse r;
                r.response_id = fmt::format("{}-{}-{}", to_string(b), to_string(s), i);
                r.stance = s;
                r.bucket = b;
                pop.push_back(r);
            }
        }
    }
    const auto a = stratified_sample(pop, kSamplePerBucket, kDefaultStanceRatio, 5);
    const auto again = stratified_sample(pop, kSamplePerBucket, kDefaultStanceRatio, 5);
    std::map<std::pair<Bucket, Stance>, int> counts;
    for (const auto& r : a) ++counts[{r.bucket, r.stance}];
    bool quotas = true;
    for (Bucket b : kBuckets) {
        quotas = quotas && counts[{b, Stance::agree}] == 250 && counts[{b, Stance::disagree}] == 250 &&
                 counts[{b, Stance::default_stance}] == 500;
    }
    bool deterministic = a.size() == again.size();
    for (std::size_t i = 0; deterministic && i < a.size(); ++i) deterministic = a[i].response_id == again[i].response_id;
    return {violations == 0 && quotas && deterministic,
            fmt::format("{} pairs, {} partition violations; per bucket {}/{}/{}; deterministic={}", kBucketPairs,
                        violations, counts[{Bucket::bad, Stance::agree}], counts[{Bucket::bad, Stance::disagree}],
                        counts[{Bucket::bad, Stance::default_stance}], deterministic)};
}

Outcome end_to_end(const test_support::MockRun& first, const std::filesystem::path& dir,
                   const std::filesystem::path& dir2) {
    const auto second = test_support::run_mock_pipeline(dir2, 7);
    bool deterministic = first.digests.size() == test_support::deterministic_outputs().size();
    for (const auto& [file, digest] : first.digests) deterministic = deterministic && second.digests.at(file) == digest;

    bool complete = true;
    for (const char* stage : {"corpus", "respond", "judge", "bucket", "sample", "improve", "metrics"}) {
        complete = complete && first.manifest["stages"][stage]["status"] == "complete";
    }
    const auto rows = read_jsonl(dir / "comparison.jsonl");
    const bool table = rows.size() == 5 && rows[0]["method"] == "Original";
    bool rejudged = true;
    for (const auto& imp : load_improved(dir / "improved.jsonl")) rejudged = rejudged && imp.evaluation_after.size() == 2;

    // Probe the improvement prompts on a real test-set item.
    RunContext run(test_support::mock_run_config(7), dir);
    const auto test_set = load_bucketed(dir / "test_set.jsonl");
    const auto questions = load_questions(dir / "questions.jsonl");
    const auto responses = load_responses(dir / "responses.jsonl");
    const auto evals = load_evaluations(dir / "evaluations.jsonl");
    const std::string rid = test_set.at(0).response_id;
    const Response* resp = nullptr;
    const Question* q = nullptr;
    const Evaluation* ee = nullptr;
    const Evaluation* se = nullptr;
    for (const auto& r : responses) if (r.id == rid) resp = &r;
    for (const auto& x : questions) if (resp && x.id == resp->question_id) q = &x;
    for (const auto& e : evals) {
        if (e.response_id != rid) continue;
        (e.scheme == Scheme::error_based ? ee : se) = &e;
    }
    test_support::ProbeReport probes;
    for (bool appendix : {false, true}) {
        RefineConfig rc;
        rc.model_id = run.config().improve_model;
        rc.matrix.appendix_table = appendix;
        Refiner refiner(run.gateway(), run.assets(), rc);
        const auto p = test_support::probe_strategy_matrix(refiner, *q, *resp, *ee, *se);
        probes.prompts += p.prompts;
        probes.problems.insert(probes.problems.end(), p.problems.begin(), p.problems.end());
    }

    const bool ok = deterministic && complete && table && rejudged && probes.ok() && first.seconds < kEndToEndSeconds &&
                    second.seconds < kEndToEndSeconds;
    std::string detail = fmt::format("{:.2f} s and {:.2f} s (limit {} s); outputs byte-identical across runs={}; "
                                     "stages complete={}; comparison rows={}; re-judged={}; {} prompt probes, {} problems",
                                     first.seconds, second.seconds, kEndToEndSeconds, deterministic, complete, rows.size(),
                                     rejudged, probes.prompts, probes.problems.size());
    if (!probes.problems.empty()) detail += " (" + probes.problems.front() + ")";
    return {ok, detail};
}

Outcome triage(const json& tr) {
    auto counts = [](const json& j) {
        return TriageCounts{j["appropriate"].get<std::size_t>(), j["excessive"].get<std::size_t>(),
                            j["insufficient"].get<std::size_t>()};
    };
    const double s = triage_acceptability(counts(tr["score_based"]));
    const double e = triage_acceptability(counts(tr["error_based"]));
    const double avg = triage_average({counts(tr["score_based"]), counts(tr["error_based"])});
    const bool ok = round1(s) == tr["score_based"]["printed"].get<double>() &&
                    round1(e) == tr["error_based"]["printed"].get<double>() &&
                    round1(avg) == tr["printed_average"].get<double>();
    return {ok, fmt::format("score-based {:.2f}, error-based {:.2f}, average {:.2f} (published 79.9 / 80.5 / 80.2)", s, e,
                            avg)};
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::warn);
    const json published = test_support::load_fixture("published.json");
    test_support::TempDir run_dir("acceptance");
    test_support::TempDir run_dir2("acceptance-repeat");

    std::optional<test_support::MockRun> mock_run;
    auto need_run = [&]() -> const test_support::MockRun& {
        if (!mock_run) mock_run = test_support::run_mock_pipeline(run_dir.path(), 7);
        return *mock_run;
    };

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"metric-oracle-equivalence", metric_oracle},
        {"win-count-reproduction", [&] { return win_counts_reproduced(published["comparison"]); }},
        {"relative-change-reproduction", [&] { return relative_changes_reproduced(published["comparison"]); }},
        {"win-rate-arithmetic", [&] { return win_rate_arithmetic(published["win_rates"]); }},
        {"krippendorff-alpha", alpha_checks},
        {"parser-fixture-corpus", parser_corpus},
        {"corpus-invariant", [&] { return corpus_invariant(need_run(), run_dir.path()); }},
        {"bucketing-partition", bucketing_partition},
        {"end-to-end-mock-run", [&] { return end_to_end(need_run(), run_dir.path(), run_dir2.path()); }},
        {"triage-arithmetic", [&] { return triage(published["triage"]); }},
    };

    int failures = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    std::cout << (failures == 0 ? "ALL PASS" : fmt::format("{} FAILED", failures)) << " (" << criteria.size()
              << " criteria)" << std::endl;
    return failures == 0 ? 0 : 1;
}
