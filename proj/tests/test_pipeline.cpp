#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <set>

#include "e2e.hpp"
#include "finest/mock_world.hpp"

using namespace finest;
using test_support::TempDir;

TEST_CASE("offline pipeline over the fixture corpus", "[pipeline]") {
    TempDir dir("e2e");
    const auto run = test_support::run_mock_pipeline(dir.path(), 7);
    CHECK(run.seconds < 60.0);

    for (const auto& f : test_support::deterministic_outputs()) {
        INFO(f);
        CHECK(std::filesystem::exists(dir / f));
    }
    for (const char* stage : {"corpus", "respond", "judge", "bucket", "sample", "improve", "metrics", "tasks"}) {
        INFO(stage);
        CHECK(run.manifest["stages"][stage]["status"] == "complete");
    }
    CHECK(run.manifest["config_hash"].get<std::string>().size() == 64);
    CHECK(run.manifest["assets"]["sha256"].size() >= required_assets().size());

    const json stats = json::parse(read_text_file(dir / "corpus_stats.json"));
    CHECK(stats["questions"] == 20);
    CHECK(stats["responses"] == 180);
    CHECK(stats["product_check"] == true);

    const auto evals = load_evaluations(dir / "evaluations.jsonl");
    CHECK(evals.size() == 360);
    const auto improved = load_improved(dir / "improved.jsonl");
    const auto test_set = load_bucketed(dir / "test_set.jsonl");
    CHECK(test_set.size() == 24);
    CHECK(improved.size() == test_set.size() * 4);
    std::set<StrategyId> strategies;
    for (const auto& i : improved) {
        strategies.insert(i.strategy);
        CHECK(i.evaluation_after.size() == 2);
    }
    CHECK(strategies.size() == 4);

    const auto rows = read_jsonl(dir / "comparison.jsonl");
    REQUIRE(rows.size() == 5);
    CHECK(rows[0]["method"] == "Original");
    const std::string table = read_text_file(dir / "comparison.txt");
    for (StrategyId s : kStrategies) CHECK(table.find(method_label(s)) != std::string::npos);

    const auto tasks = load_tasks(dir / "tasks.jsonl");
    const auto ledger = load_ledger(dir / "ledger.jsonl");
    CHECK(tasks.size() == test_set.size());
    CHECK(ledger.size() == tasks.size());
    const std::string task_file = read_text_file(dir / "tasks.jsonl");
    CHECK(task_file.find("hidden_key") == std::string::npos);
    CHECK(task_file.find(ledger[0].hidden_key) == std::string::npos);
}

TEST_CASE("pipeline output is a function of the seed", "[pipeline]") {
    TempDir a("det-a"), b("det-b"), c("det-c");
    const auto ra = test_support::run_mock_pipeline(a.path(), 7);
    const auto rb = test_support::run_mock_pipeline(b.path(), 7);
    const auto rc = test_support::run_mock_pipeline(c.path(), 8);
    CHECK(ra.digests.size() == test_support::deterministic_outputs().size());
    for (const auto& [file, digest] : ra.digests) {
        INFO(file);
        CHECK(rb.digests.at(file) == digest);
    }
    CHECK(rc.digests.at("evaluations.jsonl") != ra.digests.at("evaluations.jsonl"));
}

TEST_CASE("rerunning a stage is served from the cache", "[pipeline]") {
    TempDir dir("rerun");
    const auto first = test_support::run_mock_pipeline(dir.path(), 7);
    CHECK(first.manifest["stages"]["judge"]["gateway"]["backend_calls"].get<int>() > 0);
    const std::string before = read_text_file(dir / "evaluations.jsonl");

    RunContext again(test_support::mock_run_config(7), dir.path());
    stage_judge(again, {Scheme::error_based, Scheme::score_based});
    const json m = again.manifest();
    CHECK(m["stages"]["judge"]["gateway"]["backend_calls"] == 0);
    CHECK(m["stages"]["judge"]["gateway"]["cache_hits"].get<int>() > 0);
    CHECK(read_text_file(dir / "evaluations.jsonl") == before);
    // Earlier stages keep their records.
    CHECK(m["stages"]["improve"]["status"] == "complete");
}

TEST_CASE("judging one scheme keeps the other", "[pipeline]") {
    TempDir dir("scheme");
    test_support::run_mock_pipeline(dir.path(), 3);
    RunContext run(test_support::mock_run_config(3), dir.path());
    stage_judge(run, {Scheme::score_based});
    const auto evals = load_evaluations(dir / "evaluations.jsonl");
    CHECK(evals.size() == 360);
    CHECK(evals[0].scheme == Scheme::error_based);
    CHECK(evals[1].scheme == Scheme::score_based);
    CHECK(evals[0].response_id == evals[1].response_id);
}

TEST_CASE("stages refuse to run without their inputs", "[pipeline]") {
    TempDir dir("missing");
    RunContext run(test_support::mock_run_config(1), dir.path());
    REQUIRE_ERRC(stage_judge(run, {Scheme::error_based}), Errc::io_error);
    CHECK(run.manifest()["stages"]["judge"]["status"] == "failed");
}

TEST_CASE("run config round-trips and validates", "[pipeline]") {
    RunConfig c = test_support::mock_run_config(5);
    c.strategies = {StrategyId::finest_error};
    c.matrix.appendix_table = true;
    c.study.bucket_mode = BucketMode::either;
    const RunConfig back = RunConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(back.hash() == c.hash());
    RunConfig other = c;
    other.seed = 6;
    CHECK(other.hash() != c.hash());
    REQUIRE_ERRC(RunConfig::from_json(json{{"seed", "x"}}), Errc::config_error);
    REQUIRE_ERRC(RunConfig::from_json(json{{"stances", {"sideways"}}}), Errc::config_error);

    TempDir dir("assets");
    RunConfig bad = c;
    bad.assets_dir = dir.path();
    REQUIRE_ERRC(RunContext(bad, dir / "run"), Errc::config_error);
}

namespace {

int run_cli(const std::string& args, const std::filesystem::path& log) {
    // stdout carries the stage summary; diagnostics go to a sibling .err file.
    const std::string cmd = std::string(FINEST_CLI) + " " + args + " > \"" + log.string() + "\" 2> \"" +
                            log.string() + ".err\"";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("command-line driver runs the stages in order", "[cli]") {
    TempDir dir("cli");
    const auto run = dir / "run";
    const auto log = dir / "log.txt";
    const std::string sources = (test_support::fixtures_dir() / "sources" / "sources.json").string();
    write_text_file(dir / "config.json", R"({"seed": 7, "study": {"n_per_bucket": 8, "thresholds": "population"}})");
    const std::string base = "--config \"" + (dir / "config.json").string() + "\" --run \"" + run.string() + "\" --log-level warn ";

    REQUIRE(run_cli("taxonomy", log) == 0);
    CHECK(read_text_file(log) == taxonomy_registry().serialize());

    REQUIRE(run_cli(base + "corpus build --sources \"" + sources + "\"", log) == 0);
    CHECK(json::parse(read_text_file(log))["questions"] == 20);
    // Later stages pick up the stored config.
    const std::string rest = "--run \"" + run.string() + "\" --log-level warn ";
    REQUIRE(run_cli(rest + "respond --models mock-gen-a,mock-gen-b", log) == 0);
    CHECK(json::parse(read_text_file(log))["responses"] == 120);
    REQUIRE(run_cli(rest + "judge --scheme both", log) == 0);
    REQUIRE(run_cli(rest + "study bucket", log) == 0);
    REQUIRE(run_cli(rest + "study sample --n 6", log) == 0);
    CHECK(load_bucketed(run / "test_set.jsonl").size() == 18);
    REQUIRE(run_cli(rest + "improve --strategies error,score", log) == 0);
    CHECK(read_text_file(log).find("Improved_FINEST-Score") != std::string::npos);
    CHECK(read_text_file(log).find("Improved_Self") == std::string::npos);
    REQUIRE(run_cli(rest + "metrics report", log) == 0);
    CHECK(read_text_file(log).find("content") != std::string::npos);
    REQUIRE(run_cli(rest + "study tasks", log) == 0);
    CHECK(load_tasks(run / "tasks.jsonl").size() == 18);
    CHECK_FALSE(std::filesystem::exists(run / "run" / "cache"));
    CHECK(std::filesystem::exists(run / "cache" / "cache.jsonl"));

    // Typed failures exit with status 2 and name the error.
    CHECK(run_cli(rest + "study agreement", log) == 2);
    const auto err = std::filesystem::path(log.string() + ".err");
    CHECK(read_text_file(err).find("error:") == 0);
    CHECK(run_cli("--run \"" + (dir / "empty").string() + "\" judge", log) == 2);
    CHECK(read_text_file(err).find("IoError") != std::string::npos);
    CHECK(run_cli("judge --scheme sideways", log) != 0);
}
