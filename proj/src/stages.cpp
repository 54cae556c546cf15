#include "finest/stages.hpp"

#include <map>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "finest/parallel.hpp"

namespace finest {

namespace {

template <typename F>
auto run_stage(RunContext& run, const std::string& name, F&& body) {
    run.begin_stage(name);
    spdlog::info("stage {} started", name);
    try {
        auto out = body();
        if constexpr (std::is_same_v<decltype(out), json>) {
            run.complete_stage(name, out);
        } else {
            run.complete_stage(name, json::object());
        }
        spdlog::info("stage {} complete", name);
        return out;
    } catch (const std::exception& ex) {
        run.fail_stage(name, ex.what());
        throw;
    }
}

template <typename T, typename F>
std::vector<T> load_rows(const std::filesystem::path& file, F convert) {
    if (!std::filesystem::exists(file)) {
        throw Error(Errc::io_error, file.filename().string() + " is missing; run the earlier stage first");
    }
    std::vector<T> out;
    for (const auto& row : read_jsonl(file)) out.push_back(convert(row));
    return out;
}

template <typename T, typename F>
std::vector<json> to_rows(const std::vector<T>& items, F convert) {
    std::vector<json> rows;
    rows.reserve(items.size());
    for (const auto& it : items) rows.push_back(convert(it));
    return rows;
}

std::map<std::string, Question> by_id(const std::vector<Question>& qs) {
    std::map<std::string, Question> m;
    for (const auto& q : qs) m.emplace(q.id, q);
    return m;
}

std::map<std::string, Response> by_id(const std::vector<Response>& rs) {
    std::map<std::string, Response> m;
    for (const auto& r : rs) m.emplace(r.id, r);
    return m;
}

JudgeConfig judge_config(const RunConfig& c) {
    JudgeConfig j;
    j.model_id = c.judge_model;
    j.extract_model_id = c.extract_model;
    j.retries = c.judge_retries;
    j.mode = c.parse_mode;
    j.decoding = c.decoding;
    return j;
}

std::string metrics_line(const std::string& label, const AggregateMetrics& m) {
    std::string line = fmt::format("{:<28}", label);
    for (std::size_t k = 0; k < kMetricCount; ++k) {
        const auto v = metric_values(m)[k];
        line += v ? fmt::format(" {:>10.3f}", *v) : fmt::format(" {:>10}", "n/a");
    }
    return line + "\n";
}

std::string metrics_header() {
    std::string line = fmt::format("{:<28}", "group");
    for (std::size_t k = 0; k < kMetricCount; ++k) {
        std::string name = metric_name(k);
        // "appropriateness_ratio" is wider than the column
        if (name.size() > 10) name = name.substr(0, 4) + "_" + name.substr(name.rfind('_') + 1);
        line += fmt::format(" {:>10}", name);
    }
    return line + "\n";
}

}  // namespace

std::vector<Question> load_questions(const std::filesystem::path& file) {
    return load_rows<Question>(file, [](const json& j) { return question_from_json(j); });
}
std::vector<Response> load_responses(const std::filesystem::path& file) {
    return load_rows<Response>(file, [](const json& j) { return response_from_json(j); });
}
std::vector<Evaluation> load_evaluations(const std::filesystem::path& file) {
    return load_rows<Evaluation>(file, [](const json& j) { return Evaluation::from_json(j); });
}
std::vector<BucketedResponse> load_bucketed(const std::filesystem::path& file) {
    return load_rows<BucketedResponse>(file, [](const json& j) { return BucketedResponse::from_json(j); });
}
std::vector<ImprovedResponse> load_improved(const std::filesystem::path& file) {
    return load_rows<ImprovedResponse>(file, [](const json& j) { return ImprovedResponse::from_json(j); });
}
std::vector<AnnotationTask> load_tasks(const std::filesystem::path& file) {
    return load_rows<AnnotationTask>(file, [](const json& j) { return AnnotationTask::from_json(j); });
}
std::vector<LedgerEntry> load_ledger(const std::filesystem::path& file) {
    return load_rows<LedgerEntry>(file, [](const json& j) { return LedgerEntry::from_json(j); });
}
std::vector<Vote> load_votes(const std::filesystem::path& file) {
    if (!std::filesystem::exists(file)) return {};
    return load_rows<Vote>(file, [](const json& j) { return Vote::from_json(j); });
}

json stage_corpus(RunContext& run) {
    return run_stage(run, "corpus", [&] {
        const RunConfig& c = run.config();
        if (c.sources.empty()) throw Error(Errc::config_error, "no corpus sources configured");
        std::vector<SourceRecord> records;
        for (const auto& spec : c.sources) {
            auto part = load_source(spec);
            records.insert(records.end(), part.begin(), part.end());
        }
        CorpusOptions opts;
        opts.transform_model = c.transform_model;
        opts.filter_model = c.filter_model;
        opts.parse_retries = c.corpus_retries;
        opts.workers = c.gateway.max_in_flight;
        opts.decoding = c.decoding;
        CorpusBuilder builder(run.gateway(), run.assets(), opts);
        const CorpusBuildResult result = builder.build(records);
        write_jsonl(run.file("questions.jsonl"), to_rows(result.questions, [](const Question& q) { return to_json(q); }));
        write_jsonl(run.file("dropped.jsonl"), to_rows(result.dropped, [](const Question& q) { return to_json(q); }));
        std::map<std::string, std::size_t> per_source;
        for (const auto& q : result.questions) per_source[std::string(to_string(q.source))]++;
        json summary = {{"records", records.size()},
                        {"questions", result.questions.size()},
                        {"dropped", result.dropped.size()},
                        {"per_source", per_source}};
        write_text_file(run.file("corpus_stats.json"), summary.dump(2) + "\n");
        return summary;
    });
}

json stage_respond(RunContext& run, const std::vector<std::string>& models, const std::vector<Stance>& stances) {
    return run_stage(run, "respond", [&] {
        const RunConfig& c = run.config();
        const auto& model_ids = models.empty() ? c.generation_models : models;
        const auto& stance_list = stances.empty() ? c.stances : stances;
        for (const auto& m : model_ids) {
            if (!run.gateway().has_backend(m)) throw Error(Errc::config_error, "no backend for model '" + m + "'");
        }
        const auto questions = load_questions(run.file("questions.jsonl"));
        std::vector<ResponseBatch> batches(questions.size());
        parallel_for(questions.size(), c.gateway.max_in_flight, [&](std::size_t i) {
            batches[i] = generate_responses(run.gateway(), run.assets(), questions[i], model_ids, stance_list, c.decoding);
        });
        std::vector<Response> responses;
        std::vector<json> missing;
        for (const auto& b : batches) {
            responses.insert(responses.end(), b.responses.begin(), b.responses.end());
            for (const auto& m : b.missing) {
                missing.push_back({{"question_id", m.question_id},
                                   {"model_id", m.model_id},
                                   {"stance", to_string(m.stance)},
                                   {"reason", m.reason}});
            }
        }
        write_jsonl(run.file("responses.jsonl"), to_rows(responses, [](const Response& r) { return to_json(r); }));
        write_jsonl(run.file("missing_responses.jsonl"), missing);
        const CorpusStats stats = corpus_stats(questions, responses, model_ids.size() * stance_list.size());
        // Fold the response counts into the corpus-stage summary.
        const auto stats_path = run.file("corpus_stats.json");
        json merged = std::filesystem::exists(stats_path) ? json::parse(read_text_file(stats_path)) : json::object();
        merged.update(stats.to_json());
        write_text_file(stats_path, merged.dump(2) + "\n");
        return stats.to_json();
    });
}

json stage_judge(RunContext& run, const std::vector<Scheme>& schemes) {
    return run_stage(run, "judge", [&] {
        if (schemes.empty()) throw Error(Errc::invalid_argument, "judge needs at least one scheme");
        const RunConfig& c = run.config();
        const auto questions = load_questions(run.file("questions.jsonl"));
        const auto responses = load_responses(run.file("responses.jsonl"));
        const auto qmap = by_id(questions);
        Judge judge(run.gateway(), run.assets(), judge_config(c));

        // One core question per question, shared by every response to it.
        std::vector<CoreQuestion> cores(questions.size());
        parallel_for(questions.size(), c.gateway.max_in_flight,
                     [&](std::size_t i) { cores[i] = judge.extract_core_question(questions[i]); });
        std::map<std::string, const CoreQuestion*> core_of;
        std::vector<json> core_rows;
        for (std::size_t i = 0; i < questions.size(); ++i) {
            core_of[questions[i].id] = &cores[i];
            json row = cores[i].to_json();
            row["question_id"] = questions[i].id;
            core_rows.push_back(row);
        }
        write_jsonl(run.file("cores.jsonl"), core_rows);

        const std::size_t per = schemes.size();
        std::vector<Evaluation> fresh(responses.size() * per);
        parallel_for(fresh.size(), c.gateway.max_in_flight, [&](std::size_t k) {
            const Response& r = responses[k / per];
            const auto q = qmap.find(r.question_id);
            if (q == qmap.end()) {
                throw Error(Errc::invalid_argument, "response " + r.id + " refers to unknown question " + r.question_id);
            }
            fresh[k] = judge.evaluate_response(q->second, r, schemes[k % per], core_of.at(r.question_id));
        });

        // Keep evaluations of schemes not re-run this time.
        std::map<std::pair<std::string, Scheme>, Evaluation> merged;
        if (std::filesystem::exists(run.file("evaluations.jsonl"))) {
            for (auto& e : load_evaluations(run.file("evaluations.jsonl"))) {
                merged[{e.response_id, e.scheme}] = std::move(e);
            }
        }
        for (auto& e : fresh) merged[{e.response_id, e.scheme}] = std::move(e);
        std::vector<json> rows;
        std::size_t failed_categories = 0;
        for (const auto& r : responses) {
            for (Scheme s : kSchemes) {
                auto it = merged.find({r.id, s});
                if (it == merged.end()) continue;
                for (const auto& cat : it->second.categories) failed_categories += cat.ok() ? 0 : 1;
                rows.push_back(it->second.to_json());
            }
        }
        write_jsonl(run.file("evaluations.jsonl"), rows);
        json schemes_j = json::array();
        for (Scheme s : schemes) schemes_j.push_back(to_string(s));
        return json{{"responses", responses.size()},
                    {"schemes", schemes_j},
                    {"evaluations", rows.size()},
                    {"failed_categories", failed_categories}};
    });
}

json stage_metrics(RunContext& run) {
    return run_stage(run, "metrics", [&] {
        const RunConfig& c = run.config();
        const AggregateOptions opts{c.pooled};
        const auto evals = load_evaluations(run.file("evaluations.jsonl"));
        const auto responses = load_responses(run.file("responses.jsonl"));
        const auto rmap = by_id(responses);

        std::map<std::string, std::vector<Evaluation>> by_model;
        std::map<std::string, std::vector<Evaluation>> by_stance;
        std::vector<Evaluation> error_evals;
        for (const auto& e : evals) {
            if (auto r = rmap.find(e.response_id); r != rmap.end()) {
                by_model[r->second.model_id].push_back(e);
                by_stance[std::string(to_string(r->second.stance))].push_back(e);
            }
            if (e.scheme == Scheme::error_based) error_evals.push_back(e);
        }
        const AggregateMetrics all = aggregate(evals, opts);
        json metrics = {{"pooled", c.pooled}, {"overall", all.to_json()}};
        std::string report = "Evaluation metrics (" + std::string(c.pooled ? "pooled" : "per-response mean") + ")\n\n";
        report += metrics_header() + metrics_line("all", all);
        for (const auto& [model, list] : by_model) {
            const AggregateMetrics m = aggregate(list, opts);
            metrics["by_model"][model] = m.to_json();
            report += metrics_line("model " + model, m);
        }
        for (const auto& [stance, list] : by_stance) {
            const AggregateMetrics m = aggregate(list, opts);
            metrics["by_stance"][stance] = m.to_json();
            report += metrics_line("stance " + stance, m);
        }
        if (!error_evals.empty()) {
            const auto ratios = error_type_ratio(error_evals);
            metrics["error_type_ratio"] = ratios;
            report += "\nError-type ratio (% of responses)\n";
            for (const auto& t : taxonomy_registry().error_types) {
                auto it = ratios.find(t.id);
                if (it == ratios.end()) continue;
                report += fmt::format("  {:<16} {:<30} {:>6.2f}\n", std::string(to_string(t.category)), t.name, it->second);
            }
        }
        if (std::filesystem::exists(run.file("comparison.txt"))) {
            report += "\nImprovement comparison\n" + read_text_file(run.file("comparison.txt"));
        }
        write_text_file(run.file("metrics.json"), metrics.dump(2) + "\n");
        write_text_file(run.file("report.txt"), report);
        return json{{"evaluations", evals.size()}};
    });
}

json stage_bucket(RunContext& run) {
    return run_stage(run, "bucket", [&] {
        const RunConfig& c = run.config();
        const auto evals = load_evaluations(run.file("evaluations.jsonl"));
        const auto responses = load_responses(run.file("responses.jsonl"));
        std::map<std::string, double> ratio;
        std::map<std::string, double> score;
        for (const auto& e : evals) {
            if (e.scheme == Scheme::error_based) {
                if (auto v = overall_ratio(e)) ratio[e.response_id] = *v;
            } else if (auto v = overall_score(e)) {
                score[e.response_id] = *v;
            }
        }
        std::vector<BucketedResponse> rows;
        std::size_t skipped = 0;
        for (const auto& r : responses) {
            if (!ratio.count(r.id) || !score.count(r.id)) {
                ++skipped;
                continue;
            }
            BucketedResponse b;
            b.response_id = r.id;
            b.question_id = r.question_id;
            b.model_id = r.model_id;
            b.stance = r.stance;
            b.overall_ratio = ratio[r.id];
            b.overall_score = score[r.id];
            rows.push_back(b);
        }
        BucketThresholds t = BucketThresholds::defaults();
        if (c.study.population_thresholds) {
            std::vector<std::pair<double, double>> pop;
            for (const auto& b : rows) pop.emplace_back(b.overall_ratio, b.overall_score);
            t = BucketThresholds::from_population(pop);
        }
        std::map<std::string, std::size_t> counts;
        for (auto& b : rows) {
            b.bucket = bucket(b.overall_ratio, b.overall_score, t, c.study.bucket_mode);
            counts[std::string(to_string(b.bucket))]++;
        }
        write_jsonl(run.file("buckets.jsonl"), to_rows(rows, [](const BucketedResponse& b) { return b.to_json(); }));
        return json{{"bucketed", rows.size()},
                    {"skipped_incomplete", skipped},
                    {"thresholds", {{"avg_ratio", t.avg_ratio}, {"avg_score", t.avg_score}}},
                    {"mode", c.study.bucket_mode == BucketMode::both ? "and" : "or"},
                    {"counts", counts}};
    });
}

json stage_sample(RunContext& run) {
    return run_stage(run, "sample", [&] {
        const RunConfig& c = run.config();
        const auto population = load_bucketed(run.file("buckets.jsonl"));
        const auto sample = stratified_sample(population, c.study.n_per_bucket, c.study.stance_ratio, c.seed);
        write_jsonl(run.file("test_set.jsonl"), to_rows(sample, [](const BucketedResponse& b) { return b.to_json(); }));
        return json{{"population", population.size()}, {"sampled", sample.size()}, {"seed", c.seed}};
    });
}

json stage_improve(RunContext& run, const std::vector<StrategyId>& strategies) {
    return run_stage(run, "improve", [&] {
        const RunConfig& c = run.config();
        const auto& strategy_list = strategies.empty() ? c.strategies : strategies;
        const auto test_set = load_bucketed(run.file("test_set.jsonl"));
        const auto qmap = by_id(load_questions(run.file("questions.jsonl")));
        const auto rmap = by_id(load_responses(run.file("responses.jsonl")));
        std::map<std::pair<std::string, Scheme>, Evaluation> emap;
        for (auto& e : load_evaluations(run.file("evaluations.jsonl"))) emap[{e.response_id, e.scheme}] = std::move(e);

        std::vector<ComparisonItem> items;
        for (const auto& b : test_set) {
            auto r = rmap.find(b.response_id);
            if (r == rmap.end()) throw Error(Errc::invalid_argument, "test-set response " + b.response_id + " is unknown");
            auto q = qmap.find(r->second.question_id);
            auto ee = emap.find({b.response_id, Scheme::error_based});
            auto se = emap.find({b.response_id, Scheme::score_based});
            if (q == qmap.end() || ee == emap.end() || se == emap.end()) {
                throw Error(Errc::invalid_argument, "test-set response " + b.response_id + " lacks its question or evaluations");
            }
            items.push_back({q->second, r->second, ee->second, se->second});
        }

        Judge judge(run.gateway(), run.assets(), judge_config(c));
        RefineConfig rc;
        rc.model_id = c.improve_model;
        rc.matrix = c.matrix;
        rc.decoding = c.decoding;
        rc.rounds = c.rounds;
        Refiner refiner(run.gateway(), run.assets(), rc);
        const ComparisonResult result = run_comparison(items, strategy_list, refiner, judge, AggregateOptions{c.pooled});

        write_jsonl(run.file("improved.jsonl"),
                    to_rows(result.improved, [](const ImprovedResponse& r) { return r.to_json(); }));
        write_jsonl(run.file("comparison.jsonl"), result.comparison.to_jsonl());
        std::vector<json> failures;
        for (const auto& f : result.failures) {
            failures.push_back({{"response_id", f.response_id}, {"strategy", to_string(f.strategy)}, {"reason", f.reason}});
        }
        write_jsonl(run.file("comparison_failures.jsonl"), failures);
        write_text_file(run.file("comparison.txt"), result.comparison.to_text());
        return json{{"items", items.size()},
                    {"improved", result.improved.size()},
                    {"failures", result.failures.size()},
                    {"wins", result.comparison.wins}};
    });
}

json stage_tasks(RunContext& run) {
    return run_stage(run, "tasks", [&] {
        const RunConfig& c = run.config();
        const auto test_set = load_bucketed(run.file("test_set.jsonl"));
        const auto qmap = by_id(load_questions(run.file("questions.jsonl")));
        const auto rmap = by_id(load_responses(run.file("responses.jsonl")));
        std::map<std::string, ImprovedResponse> improved;
        for (auto& r : load_improved(run.file("improved.jsonl"))) {
            if (r.strategy == c.study.task_strategy) improved.emplace(r.source_response_id, std::move(r));
        }
        std::vector<PairInput> pairs;
        std::size_t skipped = 0;
        for (const auto& b : test_set) {
            auto imp = improved.find(b.response_id);
            auto r = rmap.find(b.response_id);
            if (imp == improved.end() || r == rmap.end() || !qmap.count(r->second.question_id)) {
                ++skipped;
                continue;
            }
            pairs.push_back({b.response_id, imp->second.id, qmap.at(r->second.question_id).text, r->second.text,
                             imp->second.text, b.bucket});
        }
        if (pairs.empty()) throw Error(Errc::empty_input, "no improved responses for the annotation tasks");
        const TaskSet set = make_pairwise_tasks(pairs, c.seed);
        write_jsonl(run.file("tasks.jsonl"), to_rows(set.tasks, [](const AnnotationTask& t) { return t.to_json(); }));
        write_jsonl(run.file("ledger.jsonl"), to_rows(set.ledger, [](const LedgerEntry& l) { return l.to_json(); }));
        return json{{"tasks", set.tasks.size()},
                    {"skipped", skipped},
                    {"strategy", to_string(c.study.task_strategy)}};
    });
}

StudyReport stage_agreement(RunContext& run) {
    StudyReport report;
    run_stage(run, "agreement", [&] {
        const auto ledger = load_ledger(run.file("ledger.jsonl"));
        const auto votes = load_votes(run.file("votes.jsonl"));
        report = study_report(ledger, votes);
        write_text_file(run.file("study_report.json"), report.to_json().dump(2) + "\n");
        write_text_file(run.file("study_report.txt"), report.to_text());
        return json{{"tasks", report.tasks}, {"votes", report.votes}};
    });
    return report;
}

json run_pipeline(RunContext& run) {
    json out;
    out["corpus"] = stage_corpus(run);
    out["respond"] = stage_respond(run);
    out["judge"] = stage_judge(run, {Scheme::error_based, Scheme::score_based});
    out["bucket"] = stage_bucket(run);
    out["sample"] = stage_sample(run);
    out["improve"] = stage_improve(run);
    out["metrics"] = stage_metrics(run);
    out["tasks"] = stage_tasks(run);
    return out;
}

}  // namespace finest
