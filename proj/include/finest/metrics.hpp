#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "finest/judge.hpp"
#include "finest/taxonomy.hpp"

namespace finest {

/// |union of flagged sentences| / n_sentences; an All record flags every
/// sentence.
double error_sentence_ratio(const std::vector<ErrorRecord>& records, int n_sentences);

/// Number of distinct sentences flagged (n_sentences for any All record).
int flagged_sentence_count(const std::vector<ErrorRecord>& records, int n_sentences);

/// Unweighted mean of the category ratios that succeeded; nullopt when none
/// did. Requires an error-based evaluation.
std::optional<double> overall_ratio(const Evaluation& eval);
/// Mean of the category scores that succeeded. Requires a score-based one.
std::optional<double> overall_score(const Evaluation& eval);

struct CategoryMetrics {
    std::optional<double> error_sentence_ratio;
    std::optional<double> score;
    std::size_t ratio_count = 0;  // evaluations contributing
    std::size_t score_count = 0;
    std::size_t ratio_failed = 0;  // excluded failed categories
    std::size_t score_failed = 0;
};

struct AggregateOptions {
    /// Divide all flagged sentences by all sentences instead of averaging
    /// per-response ratios.
    bool pooled = false;
};

struct AggregateMetrics {
    std::array<CategoryMetrics, 3> categories;

    const CategoryMetrics& at(Category c) const { return categories[static_cast<std::size_t>(c)]; }
    json to_json() const;
};

/// Means over a mixed list of evaluations: ratios from error-based ones,
/// scores from score-based ones. Throws Error(empty_input).
AggregateMetrics aggregate(const std::vector<Evaluation>& evals, AggregateOptions options = {});

/// Percent of responses with at least one record of each error type, keyed
/// by canonical id. Each category's denominator counts the responses whose
/// evaluation of that category succeeded. Throws Error(empty_input).
std::map<std::string, double> error_type_ratio(const std::vector<Evaluation>& evals,
                                               const Taxonomy& taxonomy = taxonomy_registry());

/// (improved - original) / original * 100. Throws Error(zero_baseline).
double relative_change(double original, double improved);

/// The six compared metrics in column order: ratio per category, then score
/// per category.
inline constexpr std::size_t kMetricCount = 6;
std::string metric_name(std::size_t metric);
/// Ratios are minimized, scores maximized.
bool metric_minimized(std::size_t metric) noexcept;

using MetricValues = std::array<std::optional<double>, kMetricCount>;

MetricValues metric_values(const AggregateMetrics& m);

struct MethodRow {
    std::string method;
    MetricValues values;
};

/// Tie tolerance for win counting.
inline constexpr double kTieEpsilon = 1e-9;

/// For each metric every method attaining the optimum gains a win; methods
/// missing that metric cannot win it.
std::map<std::string, int> win_counts(const std::vector<MethodRow>& rows);

struct MethodComparison {
    std::string baseline;
    std::vector<MethodRow> rows;  // baseline first, then methods in order
    std::map<std::string, MetricValues> relative_changes;  // non-baseline rows
    std::map<std::string, int> wins;                       // non-baseline rows
    std::map<std::string, AggregateMetrics> coverage;      // optional, per method

    /// Computes relative changes against `baseline` and win counts across
    /// the other rows. The baseline must be one of `rows`.
    static MethodComparison build(std::vector<MethodRow> rows, const std::string& baseline);

    const MethodRow& row(const std::string& method) const;

    std::vector<json> to_jsonl() const;
    /// Aligned table with parenthesized relative changes and a win summary.
    std::string to_text() const;
};

}  // namespace finest
