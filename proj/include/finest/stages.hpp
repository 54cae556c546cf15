#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "finest/judge.hpp"
#include "finest/metrics.hpp"
#include "finest/refine.hpp"
#include "finest/run.hpp"
#include "finest/study.hpp"

namespace finest {

// Pipeline stages. Each reads only files earlier stages left in the run
// directory (plus the config), writes its own record-per-line outputs and
// marks itself in the manifest. A failed stage is recorded as failed and
// the error is rethrown.
//
//   corpus     sources            -> questions.jsonl, dropped.jsonl, corpus_stats.json
//   respond    questions          -> responses.jsonl, missing_responses.jsonl
//   judge      questions, resp.   -> cores.jsonl, evaluations.jsonl
//   metrics    evaluations (+cmp) -> metrics.json, report.txt
//   bucket     evaluations        -> buckets.jsonl
//   sample     buckets            -> test_set.jsonl
//   improve    test set, evals    -> improved.jsonl, comparison.jsonl, comparison.txt
//   tasks      test set, improved -> tasks.jsonl, ledger.jsonl
//   agreement  ledger, votes      -> study_report.json, study_report.txt

json stage_corpus(RunContext& run);
/// `models` / `stances` override the config when non-empty.
json stage_respond(RunContext& run, const std::vector<std::string>& models = {},
                   const std::vector<Stance>& stances = {});
/// Re-running a scheme replaces that scheme's evaluations and keeps the
/// other's.
json stage_judge(RunContext& run, const std::vector<Scheme>& schemes);
json stage_metrics(RunContext& run);
json stage_bucket(RunContext& run);
json stage_sample(RunContext& run);
/// `strategies` overrides the config when non-empty.
json stage_improve(RunContext& run, const std::vector<StrategyId>& strategies = {});
json stage_tasks(RunContext& run);
StudyReport stage_agreement(RunContext& run);

/// corpus through tasks, in order.
json run_pipeline(RunContext& run);

// Run-directory readers.
std::vector<Question> load_questions(const std::filesystem::path& file);
std::vector<Response> load_responses(const std::filesystem::path& file);
std::vector<Evaluation> load_evaluations(const std::filesystem::path& file);
std::vector<BucketedResponse> load_bucketed(const std::filesystem::path& file);
std::vector<ImprovedResponse> load_improved(const std::filesystem::path& file);
std::vector<AnnotationTask> load_tasks(const std::filesystem::path& file);
std::vector<LedgerEntry> load_ledger(const std::filesystem::path& file);
std::vector<Vote> load_votes(const std::filesystem::path& file);

}  // namespace finest
