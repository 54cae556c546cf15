// finest: command-line driver for the evaluation / improvement pipeline.
//
//   finest --run runs/exp1 corpus build --sources sources.json
//   finest --run runs/exp1 respond --models gen-a,gen-b --stances agree,disagree,default
//   finest --run runs/exp1 judge --scheme both
//   finest --run runs/exp1 study bucket && finest --run runs/exp1 study sample
//   finest --run runs/exp1 improve --strategies self,taxo,error,score
//   finest --run runs/exp1 metrics report
//   finest --run runs/exp1 study tasks && finest --run runs/exp1 study serve --port 8080
//   finest --run runs/exp1 study agreement

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "finest/error.hpp"
#include "finest/stages.hpp"
#include "finest/taxonomy.hpp"
#include "finest/text.hpp"

#ifdef FINEST_WITH_ANNOTATION
#include "finest/annotation_service.hpp"
#endif

namespace {

using namespace finest;

struct Globals {
    std::string config_file;
    std::string run_dir = "run";
    std::string cache_dir;
    std::optional<std::uint64_t> seed;
    bool pooled = false;
    bool alt_matrix = false;
    std::string bucket_mode;
    std::optional<int> workers;
    std::string log_level = "info";
};

std::vector<std::string> csv(const std::string& text) {
    std::vector<std::string> out;
    for (const auto& part : split(text, ',')) {
        const std::string t(trim(part));
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

/// --config, else the config a previous stage stored in the run directory,
/// else defaults; command-line flags override all three.
RunConfig effective_config(const Globals& g) {
    const std::filesystem::path stored = std::filesystem::path(g.run_dir) / "run_config.json";
    RunConfig c;
    if (!g.config_file.empty()) {
        c = RunConfig::load(g.config_file);
    } else if (std::filesystem::exists(stored)) {
        c = RunConfig::load(stored);
    }
    if (!g.cache_dir.empty()) c.gateway.cache_dir = std::filesystem::absolute(g.cache_dir);
    if (g.seed) c.seed = *g.seed;
    if (g.pooled) c.pooled = true;
    if (g.alt_matrix) c.matrix.appendix_table = true;
    if (!g.bucket_mode.empty()) c.study.bucket_mode = parse_bucket_mode(g.bucket_mode);
    if (g.workers) c.gateway.max_in_flight = *g.workers;
    return c;
}

RunContext open_run(const Globals& g, RunConfig config) {
    // The cache location is per machine; keep it only when set explicitly.
    const bool explicit_cache = config.gateway.cache_dir.has_value();
    RunContext run(std::move(config), g.run_dir);
    json stored = run.config().to_json();
    if (!explicit_cache) stored.erase("cache_dir");
    write_text_file(run.file("run_config.json"), stored.dump(2) + "\n");
    return run;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fine-grained evaluation and improvement of responses to controversial questions"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config_file, "Run config (JSON)")->check(CLI::ExistingFile);
    app.add_option("--run", g.run_dir, "Run directory")->capture_default_str();
    app.add_option("--cache-dir", g.cache_dir, "Response cache directory (default: <run>/cache)");
    app.add_option("--seed", g.seed, "Seed for mocks, sampling and side assignment");
    app.add_option("--workers", g.workers, "Concurrent backend calls");
    app.add_flag("--pooled", g.pooled, "Pool error-sentence ratios over all sentences");
    app.add_flag("--alt-matrix", g.alt_matrix, "Use the alternative strategy matrix");
    app.add_option("--bucket-mode", g.bucket_mode, "Bucketing rule")->check(CLI::IsMember({"and", "or"}));
    app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error")->capture_default_str();

    // corpus build
    auto* corpus = app.add_subcommand("corpus", "Corpus construction");
    corpus->require_subcommand(1);
    auto* corpus_build = corpus->add_subcommand("build", "Transform and filter source records into questions");
    std::string sources_file;
    std::string out_dir;
    corpus_build->add_option("--sources", sources_file, "Source mapping file (JSON)")->check(CLI::ExistingFile);
    corpus_build->add_option("--out", out_dir, "Run directory (overrides --run)");

    auto* respond = app.add_subcommand("respond", "Generate responses per model and stance");
    std::string models;
    std::string stances;
    respond->add_option("--models", models, "Comma-separated model names");
    respond->add_option("--stances", stances, "Comma-separated stances (agree,disagree,default)");

    auto* judge = app.add_subcommand("judge", "Evaluate responses");
    std::string scheme = "both";
    judge->add_option("--scheme", scheme, "error|score|both")
        ->check(CLI::IsMember({"error", "score", "both"}))
        ->capture_default_str();

    auto* metrics = app.add_subcommand("metrics", "Aggregate metrics");
    metrics->require_subcommand(1);
    metrics->add_subcommand("report", "Write metrics.json and report.txt");

    auto* improve = app.add_subcommand("improve", "Improve the test set and compare strategies");
    std::string strategies;
    improve->add_option("--strategies", strategies, "Comma-separated: self,taxo,error,score");

    auto* study = app.add_subcommand("study", "Human-study preparation and analysis");
    study->require_subcommand(1);
    auto* study_bucket = study->add_subcommand("bucket", "Assign quality buckets");
    auto* study_sample = study->add_subcommand("sample", "Draw the stratified test set");
    std::optional<std::size_t> n_per_bucket;
    study_sample->add_option("--n", n_per_bucket, "Responses per bucket");
    auto* study_tasks = study->add_subcommand("tasks", "Build blinded pairwise tasks");
#ifdef FINEST_WITH_ANNOTATION
    auto* study_serve = study->add_subcommand("serve", "Serve the annotation API");
    int port = 8080;
    std::string host = "127.0.0.1";
    std::string ui_dir;
    study_serve->add_option("--port", port)->capture_default_str();
    study_serve->add_option("--host", host)->capture_default_str();
    study_serve->add_option("--ui", ui_dir, "Static UI directory")->check(CLI::ExistingDirectory);
#endif
    auto* study_agreement = study->add_subcommand("agreement", "Win rates and inter-annotator agreement");

    auto* pipeline = app.add_subcommand("pipeline", "Run corpus through tasks in one go");
    auto* taxonomy = app.add_subcommand("taxonomy", "Print the built-in taxonomy document");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_default_logger(spdlog::stderr_color_mt("finest"));
    spdlog::set_level(spdlog::level::from_str(g.log_level));
    if (taxonomy->parsed()) {
        std::cout << taxonomy_registry().serialize();
        return 0;
    }

    try {
        if (corpus_build->parsed() && !out_dir.empty()) g.run_dir = out_dir;
        RunConfig config = effective_config(g);
        if (corpus_build->parsed() && !sources_file.empty()) {
            const json j = json::parse(read_text_file(sources_file), nullptr, false);
            if (j.is_discarded()) throw Error(Errc::config_error, sources_file + " is not valid JSON");
            const json list = j.is_array() ? j : j.value("sources", json::array());
            const auto base = std::filesystem::absolute(sources_file).parent_path();
            config.sources.clear();
            for (const auto& s : list) config.sources.push_back(SourceSpec::from_json(s, base));
        }
        if (study_sample->parsed() && n_per_bucket) config.study.n_per_bucket = *n_per_bucket;
        // Stage arguments become part of the stored config so later stages
        // and reruns see the same choices.
        if (respond->parsed() && !csv(models).empty()) config.generation_models = csv(models);
        if (respond->parsed() && !csv(stances).empty()) {
            config.stances.clear();
            for (const auto& s : csv(stances)) config.stances.push_back(parse_stance(s));
        }
        if (improve->parsed() && !csv(strategies).empty()) {
            config.strategies.clear();
            for (const auto& s : csv(strategies)) config.strategies.push_back(parse_strategy(s));
        }
        RunContext run = open_run(g, std::move(config));

        if (corpus_build->parsed()) {
            print_json(stage_corpus(run));
        } else if (respond->parsed()) {
            print_json(stage_respond(run));
        } else if (judge->parsed()) {
            std::vector<Scheme> schemes;
            if (scheme != "score") schemes.push_back(Scheme::error_based);
            if (scheme != "error") schemes.push_back(Scheme::score_based);
            print_json(stage_judge(run, schemes));
        } else if (metrics->parsed()) {
            stage_metrics(run);
            std::cout << read_text_file(run.file("report.txt"));
        } else if (improve->parsed()) {
            stage_improve(run);
            std::cout << read_text_file(run.file("comparison.txt"));
        } else if (study_bucket->parsed()) {
            print_json(stage_bucket(run));
        } else if (study_sample->parsed()) {
            print_json(stage_sample(run));
        } else if (study_tasks->parsed()) {
            print_json(stage_tasks(run));
#ifdef FINEST_WITH_ANNOTATION
        } else if (study_serve->parsed()) {
            serve_study(run, host, port, ui_dir.empty() ? std::nullopt : std::optional<std::filesystem::path>(ui_dir));
#endif
        } else if (study_agreement->parsed()) {
            std::cout << stage_agreement(run).to_text();
        } else if (pipeline->parsed()) {
            print_json(run_pipeline(run));
        }
    } catch (const Error& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
